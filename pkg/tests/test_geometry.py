import numpy as np
import pytest

from sepsing.errors import (
    ChainBroken,
    DisksOverlap,
    NoValidRotation,
    TooCloseToBoundary,
)
from sepsing.geometry import (
    AnalyticArc,
    AnalyticMap,
    Sector,
    build_boundary,
    build_partition,
    build_rotation,
    corner_split,
    validate_admissible,
    winding_number,
)
from sepsing.scenarios import build_lens_system, build_disk_system, lens_arcs

# corner angle of the standard lens, from circle-intersection trigonometry;
# cross-checked against numerical tangent vectors in test_lens_corner_angles
LENS_ANGLE = 2 * np.arccos(0.5 / 1.2)          # = 2.2820417909807384


class TestAnalyticArc:
    def test_circle_invariants(self):
        arc = AnalyticArc.circular(0, 1.0, 0.0, 2 * np.pi)
        assert arc.is_closed
        assert arc.tail_ratio() < 1e-13
        assert arc.min_speed() > 0
        assert arc.arclength() == pytest.approx(2 * np.pi, rel=1e-12)
        arc.validate()

    def test_derivative_matches_fd(self):
        arc = AnalyticArc.circular(1j, 0.7, 0.3, 2.0)
        t = np.linspace(0.05, 0.95, 7)
        h = 1e-6
        fd = (arc.point(t + h) - arc.point(t - h)) / (2 * h)
        assert np.abs(arc.derivative(t) - fd).max() < 1e-7

    def test_rotation_is_exact(self):
        arc = AnalyticArc.circular(0.2, 1.1, -0.4, 1.3)
        rot = arc.rotated(1j, 0.77)
        t = np.linspace(0, 1, 33)
        expected = 1j + np.exp(0.77j) * (arc.point(t) - 1j)
        assert np.abs(rot.point(t) - expected).max() < 1e-14

    def test_subarc_endpoints(self):
        arc = AnalyticArc.circular(0, 1.0, 0.0, np.pi)
        sub = arc.subarc(0.25, 0.75)
        assert sub.start == pytest.approx(complex(arc.point(0.25)), abs=1e-13)
        assert sub.end == pytest.approx(complex(arc.point(0.75)), abs=1e-13)

    def test_segment(self):
        seg = AnalyticArc.segment(0, 1 + 1j)
        assert seg.point(0.5) == pytest.approx(0.5 + 0.5j)
        assert seg.arclength() == pytest.approx(np.sqrt(2), rel=1e-12)


class TestBuildBoundary:
    def test_circle_four_quarters_no_corners(self):
        quads = [AnalyticArc.circular(0, 1.0, k * np.pi / 2, (k + 1) * np.pi / 2)
                 for k in range(4)]
        b = build_boundary(quads)
        # angles pi at every junction: smooth
        assert all(abs(a - np.pi) < 1e-9 for a in b.corner_angles)
        assert all(b.is_smooth_junction(j) for j in range(4))

    def test_lens_corner_angles(self):
        b = build_boundary(lens_arcs())
        assert len(b.corner_angles) == 2
        for ang in b.corner_angles:
            assert ang == pytest.approx(LENS_ANGLE, abs=1e-10)
        # independent oracle: numerical tangent vectors at the junction
        tin = b.arcs[0].derivative(1.0)
        tout = b.arcs[1].derivative(0.0)
        oracle = np.pi - np.angle(tout / tin)
        assert oracle == pytest.approx(LENS_ANGLE, abs=1e-10)

    def test_reversed_arc_chain_broken(self):
        arcs = lens_arcs()
        with pytest.raises(ChainBroken):
            build_boundary([arcs[0], arcs[1].reversed()])

    def test_single_open_arc_rejected(self):
        with pytest.raises(ChainBroken):
            build_boundary([AnalyticArc.circular(0, 1, 0, np.pi)])


class TestWindingNumber:
    def test_circle(self, disk_system):
        b = disk_system.boundary
        assert winding_number(b, 0.0) == 1
        assert winding_number(b, 2.0) == 0

    def test_lens_origin_interior(self, lens_system):
        assert winding_number(lens_system.boundary, 0.0) == 1
        assert winding_number(lens_system.boundary, 1.5) == 0

    def test_too_close(self, disk_system):
        with pytest.raises(TooCloseToBoundary):
            winding_number(disk_system.boundary, 1.0 + 1e-14)


class TestPartition:
    def test_lens_partition_sums_to_one(self, lens_system):
        part = build_partition(lens_system, 0.25)
        assert len(part.windows) == 2
        n = 2048
        arc_idx = np.concatenate([np.zeros(n, int), np.ones(n, int)])
        t = np.tile(np.linspace(0, 1, n, endpoint=False), 2)
        etas, nus = part.values_at(arc_idx, t)
        total = etas.sum(axis=0) + nus.sum(axis=0)
        assert np.abs(total - 1.0).max() < 1e-12
        assert etas.min() > -1e-13 and nus.min() > -1e-13
        assert etas.max() < 1 + 1e-13 and nus.max() < 1 + 1e-13

    def test_disk_partition_trivial(self, disk_system):
        part = build_partition(disk_system, 0.25)
        assert part.windows == []
        etas, nus = part.values_at(np.zeros(16, int), np.linspace(0, 1, 16, endpoint=False))
        assert np.abs(etas[0] - 1.0).max() < 1e-15
        assert nus.shape[0] == 0

    def test_eta_supported_inside_J(self, lens_system):
        part = build_partition(lens_system, 0.25)
        t = np.linspace(0, 1, 512, endpoint=False)
        etas, _ = part.values_at(np.ones(512, int), t)   # arc 1 = J_2
        assert np.abs(etas[0]).max() == 0.0              # eta_1 vanishes off J_1
        # eta_2 vanishes at the arc ends (inside the corner windows)
        assert abs(etas[1][0]) < 1e-15 and abs(etas[1][-1]) < 1e-15

    def test_thin_lens_overlapping_disks(self):
        system = build_lens_system("mobius", corner_fraction=0.25, c=0.5, r=0.52)
        with pytest.raises(DisksOverlap):
            build_partition(system, 0.5)

    def test_fraction_validation(self, lens_system):
        with pytest.raises(ValueError):
            build_partition(lens_system, 0.0)

    def test_telescoping_reproduces_samples(self, lens_system, rng):
        # partition-of-unity telescoping against an arbitrary density
        part = build_partition(lens_system, 0.25)
        arc_idx = rng.integers(0, 2, 300)
        t = rng.random(300)
        f = rng.standard_normal(300) + 1j * rng.standard_normal(300)
        etas, nus = part.values_at(arc_idx, t)
        recon = (etas * f).sum(axis=0) + (nus * f).sum(axis=0)
        assert np.abs(recon - f).max() < 1e-12


class TestRotation:
    def test_lens_rotation_clears_domain(self, lens_system):
        for k, corner in enumerate(lens_system.corners):
            arc_in_idx, t_in, _, _ = corner_split(lens_system, k)
            arc = lens_system.boundary.arcs[arc_in_idx]
            ts = np.linspace(t_in, 1.0, 257)[:-1]
            rot = corner.rotate(arc.point(ts))
            s1, s2 = corner.sectors
            assert (s1.contains(rot) & s2.contains(rot)).all()
            # none of the rotated samples fall back into the closed domain
            from sepsing.geometry import CornerLocale
            locale = CornerLocale(lens_system, k, corner.radius)
            outside, clearance = locale.outside_and_clearance(rot)
            assert outside.all()
            assert clearance.min() > 1e-10

    def test_unconstrained_sectors_pick_first_maximizer(self, lens_system):
        # widen both sectors to nearly full punctured disks: many angles pass,
        # the scan still returns a deterministic angle
        import dataclasses
        sys2 = build_lens_system("mobius")
        corner = sys2.corners[0]
        wide = Sector(corner.z, corner.sectors[0].radius, -np.pi, np.pi - 1e-9)
        sys2.corners[0] = dataclasses.replace(corner, sectors=(wide, wide))
        out1 = build_rotation(sys2, 0)
        out2 = build_rotation(sys2, 0)
        assert out1.theta == out2.theta

    def test_degenerate_sectors_no_rotation(self):
        import dataclasses
        sys2 = build_lens_system("mobius")
        corner = sys2.corners[0]
        # sliver sectors pointing into the domain interior
        inward = np.angle(-corner.z)    # toward the origin = inside the lens
        s = Sector(corner.z, corner.radius, inward - 0.01, inward + 0.01)
        sys2.corners[0] = dataclasses.replace(corner, sectors=(s, s))
        with pytest.raises(NoValidRotation):
            build_rotation(sys2, 0)


class TestValidateAdmissible:
    def test_lens_mobius_passes(self, lens_system):
        report = validate_admissible(lens_system, 128)
        assert report.all_passed
        # margin for (e) is |phi'| = 1/1.2 for the affine Moebius maps
        assert report["e_derivative_bound"].margin == pytest.approx(1 / 1.2, abs=1e-12)

    def test_lens_squared_passes_with_arc_length(self, lens_squared_system):
        report = validate_admissible(lens_squared_system, 128)
        assert report.all_passed
        # image arcs of m_k(J_k) have angular length 2*arccos(0.5/1.2) < pi,
        # so the squared maps stay injective; the report carries the measured
        # (doubled) image lengths
        detail = report["f_injective_separated"].detail
        assert "image arc lengths" in detail
        assert report["e_derivative_bound"].margin == pytest.approx(2 / 1.2, rel=1e-6)

    def test_disk_z_squared_fails_injectivity(self):
        system = build_disk_system()
        system.maps = [AnalyticMap.from_expr("z**2")]
        report = validate_admissible(system, 128)
        assert not report["f_injective_separated"].passed
        assert report["f_injective_separated"].margin < 1e-8

    def test_trefoil_passes(self, trefoil_system):
        report = validate_admissible(trefoil_system, 128)
        assert report.all_passed

    def test_grid_density_precondition(self, lens_system):
        with pytest.raises(ValueError):
            validate_admissible(lens_system, 32)


def test_map_derivative_check_catches_wrong_derivative():
    m = AnalyticMap(lambda z: z**2, lambda z: 3 * z, lambda z: 2 * np.ones_like(z))
    ok, err = m.derivative_check(np.array([0.5 + 0.1j, -0.2j]))
    assert not ok and err > 1e-2
