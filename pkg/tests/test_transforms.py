import numpy as np
import pytest

from sepsing.errors import (
    AdaptiveDepthExceeded,
    MapCollision,
    NonFiniteEntry,
    OnContour,
    OnImageContour,
)
from sepsing.geometry import AnalyticArc, AnalyticMap, build_boundary
from sepsing.transforms import (
    BoundaryDensity,
    CauchySum,
    CauchyTerm,
    DiscreteOperator,
    build_quadrature,
    cauchy_transform,
    holder_seminorm,
    kernel_G,
    modified_cauchy_transform,
    nystrom_matrix,
)

TWO_PI_I = 2j * np.pi


class TestQuadrature:
    def test_circle_counts_and_moments(self, circle_rule):
        rule = circle_rule
        assert rule.n_nodes == 128                      # 8 panels x GL-16
        # closed contour: integral of dzeta vanishes; zeta^3 likewise
        assert abs(rule.weights.sum()) < 1e-13
        assert abs((rule.nodes**3 * rule.weights).sum()) < 1e-13
        # Cauchy integral of 1/(zeta - z0) for interior z0
        val = (rule.weights / (rule.nodes - 0.3)).sum()
        assert abs(val - TWO_PI_I) < 1e-10

    def test_lens_grading_metadata(self, lens_system):
        rule = build_quadrature(lens_system.boundary, base_panels=8,
                                corner_grading_depth=12)
        widths = rule.panels.panel_t1 - rule.panels.panel_t0
        # smallest panel is 2^-12 of a base panel, by construction
        assert widths.min() == pytest.approx((1 / 8) / 2**12, rel=1e-12)
        # graded panels cluster at both corners of each arc
        tree = rule.panel_tree
        assert len(tree) == 2 * (8 + 24)
        # boundary moments still exact
        assert abs(rule.weights.sum()) < 1e-12
        val = (rule.weights / (rule.nodes - 0.0)).sum()
        assert abs(val - TWO_PI_I) < 1e-10

    def test_depth_precondition(self, disk_system):
        with pytest.raises(ValueError):
            build_quadrature(disk_system.boundary, 8, 31)
        with pytest.raises(ValueError):
            build_quadrature(disk_system.boundary, 1, 0)

    def test_convergence_is_geometric(self, disk_system):
        # pre-floor error of the non-adaptive interior test drops by >= 1e3
        # per base-panel doubling (geometric convergence for analytic data)
        target = 0.6         # close enough to the contour to see the error
        errors = []
        for bp in (2, 4, 8):
            rule = build_quadrature(disk_system.boundary, base_panels=bp)
            psi = BoundaryDensity.from_function(rule, lambda z: np.ones_like(z))
            val = cauchy_transform(psi, target, adaptive=False)
            errors.append(abs(val - TWO_PI_I))
        assert errors[0] > 1e-9                       # visibly unresolved
        for a, b in zip(errors, errors[1:]):
            assert a / max(b, 1e-16) > 1e3 or b < 1e-13


class TestCauchyTransform:
    def test_interior_exterior(self, circle_rule):
        psi = BoundaryDensity.from_function(circle_rule, lambda z: np.ones_like(z))
        assert abs(cauchy_transform(psi, 0.0) - TWO_PI_I) < 1e-12
        assert abs(cauchy_transform(psi, 3.0)) < 1e-12

    def test_residue_oracle(self, circle_rule):
        # psi = 1/(zeta - 2): pole outside, value 2*pi*i * psi(z) by residues
        psi = BoundaryDensity.from_function(circle_rule, lambda z: 1 / (z - 2))
        val = cauchy_transform(psi, 0.4)
        assert abs(val - TWO_PI_I / (0.4 - 2)) < 1e-12

    def test_adaptive_close_evaluation(self, circle_rule):
        psi = BoundaryDensity.from_function(circle_rule, lambda z: np.exp(z))
        z = 0.999 + 0.0005j
        val = cauchy_transform(psi, z)
        assert abs(val - TWO_PI_I * np.exp(z)) < 1e-9 * abs(TWO_PI_I * np.exp(z))

    def test_on_contour_error(self, circle_rule):
        psi = BoundaryDensity.from_function(circle_rule, lambda z: np.ones_like(z))
        with pytest.raises(OnContour):
            cauchy_transform(psi, complex(circle_rule.nodes[5]))

    def test_depth_exceeded(self, circle_rule):
        psi = BoundaryDensity.from_function(circle_rule, lambda z: np.ones_like(z))
        node = complex(circle_rule.nodes[40])
        with pytest.raises(AdaptiveDepthExceeded):
            cauchy_transform(psi, node * (1 - 1e-12))


class TestKernelG:
    def test_identity_map_vanishes(self):
        ident = AnalyticMap.identity()
        z = np.array([0.3 + 0.1j, -0.2, 0.9j])
        w = np.array([0.1, 0.5j, -0.4])
        assert np.abs(kernel_G(ident, z, w)).max() == 0.0

    def test_square_map_closed_form(self):
        # 2 zeta/(zeta^2 - z^2) - 1/(zeta - z) = 1/(zeta + z)
        sq = AnalyticMap.from_expr("z**2")
        assert kernel_G(sq, 0.5, 0.3) == pytest.approx(1 / (0.5 + 0.3), abs=1e-14)
        # diagonal: phi''/(2 phi') = 1/(2 zeta)
        assert kernel_G(sq, 0.5, 0.5) == pytest.approx(1.0, abs=1e-14)
        # near-diagonal regularised branch stays within O(|d|) of the oracle
        val = kernel_G(sq, 0.5, 0.5 + 1e-8)
        assert abs(val - 1 / (1.0 + 1e-8)) < 1e-7

    def test_map_collision(self):
        sq = AnalyticMap.from_expr("z**2")
        with pytest.raises(MapCollision):
            kernel_G(sq, 0.5, -0.5)


class TestModifiedCauchy:
    def test_identity_agrees_with_plain(self, circle_rule, rng):
        psi = BoundaryDensity.from_function(circle_rule, lambda z: np.exp(z))
        targets = 3.0 + 2.0 * (rng.random(100) + 1j * rng.random(100))
        plain = np.array([cauchy_transform(psi, z) for z in targets])
        lifted = np.array([modified_cauchy_transform(psi, AnalyticMap.identity(), z)
                           for z in targets])
        assert np.abs(plain - lifted).max() < 1e-12

    def test_square_map_residue_oracle(self, circle_rule):
        # int 2 zeta/(zeta^2 - 1/4) dzeta = 2 * 2 pi i (poles +-1/2 inside)
        psi = BoundaryDensity.from_function(circle_rule, lambda z: np.ones_like(z))
        sq = AnalyticMap.from_expr("z**2")
        val = modified_cauchy_transform(psi, sq, 0.25)
        assert abs(val - 2 * TWO_PI_I) < 1e-12

    def test_on_image_contour(self, circle_rule):
        psi = BoundaryDensity.from_function(circle_rule, lambda z: np.ones_like(z))
        sq = AnalyticMap.from_expr("z**2")
        w = complex(circle_rule.nodes[7]) ** 2
        with pytest.raises(OnImageContour):
            modified_cauchy_transform(psi, sq, w)


class TestNystrom:
    def test_constant_kernel_rows_are_weights(self, circle_rule):
        op = nystrom_matrix(lambda zeta, z: np.ones(np.broadcast_shapes(
            np.shape(zeta), np.shape(z))), circle_rule, np.array([0.0, 1j]))
        assert np.abs(op.matrix - circle_rule.weights[None, :]).max() < 1e-15
        assert np.abs(op.matrix.sum(axis=1)).max() < 1e-13

    def test_half_circle_matches_transform_difference(self, rng):
        # right half of the unit circle with phi = z^2; T psi = C^phi(psi) o phi - C(psi)
        arc = AnalyticArc.circular(0, 1.0, -np.pi / 2, np.pi / 2)
        from sepsing.transforms import PanelSet, integrate_cauchy, _graded_edges

        panels = PanelSet.build([arc], [np.linspace(0, 1, 9)])
        sq = AnalyticMap.from_expr("z**2")
        targets = 0.35 * np.exp(2j * np.pi * rng.random(5)) + 0.05
        op_kernel = lambda zeta, z: kernel_G(sq, zeta, z)
        zeta, w = panels.flat_nodes()
        M = op_kernel(zeta[None, :], targets[:, None]) * w[None, :]
        psi = np.exp(zeta)
        direct = (M @ psi)
        for i, z in enumerate(targets):
            lifted = integrate_cauchy(panels, psi, complex(sq.f(z)), mapping=sq)
            plain = integrate_cauchy(panels, psi, complex(z))
            assert abs(direct[i] - (lifted - plain)) < 1e-9

    def test_nan_raises(self, circle_rule):
        def bad(zeta, z):
            out = np.ones(np.broadcast_shapes(np.shape(zeta), np.shape(z)), dtype=complex)
            out.flat[0] = np.nan
            return out

        with pytest.raises(NonFiniteEntry):
            nystrom_matrix(bad, circle_rule, np.array([0.0]))


class TestHolderSeminorm:
    def test_constant(self):
        assert holder_seminorm(np.linspace(0, 1, 50), np.ones(50), 0.5) == 0.0

    def test_linear_lipschitz(self):
        x = np.linspace(0, 1, 200)
        assert holder_seminorm(x, x, 1.0) == pytest.approx(1.0, rel=1e-12)

    def test_sqrt_half_holder(self):
        # the exact C^{1/2} seminorm of sqrt on [0,1] is 1, attained at y = 0
        x = np.linspace(0, 1, 1000)
        val = holder_seminorm(x, np.sqrt(x), 0.5)
        assert abs(val - 1.0) < 0.02

    def test_preconditions(self):
        with pytest.raises(ValueError):
            holder_seminorm([0.0, 1.0], [0.0, 1.0], 1.5)
        with pytest.raises(ValueError):
            holder_seminorm([0.0], [1.0], 0.5)


class TestCauchySum:
    def test_mean_value_property(self, circle_rule):
        psi = BoundaryDensity.from_function(circle_rule, lambda z: np.exp(z))
        h = CauchySum([CauchyTerm(circle_rule.panels, psi.values, None, 1.0)])
        # analytic inside: mean over a circle equals the center value
        assert h.mean_value_deviation(0.2 + 0.1j, 0.3) < 1e-8
        # analytic outside too (off the contour)
        assert h.mean_value_deviation(3.0 + 1.0j, 0.5) < 1e-8

    def test_derivative_evaluation(self, circle_rule):
        psi = BoundaryDensity.from_function(circle_rule, lambda z: z**3)
        h = CauchySum([CauchyTerm(circle_rule.panels, psi.values, None, 1.0)])
        # h(z) = 2 pi i z^3 inside; h'(z) = 6 pi i z^2
        z = 0.4 - 0.2j
        assert abs(h.evaluate_derivative(z) - TWO_PI_I * 3 * z**2) < 1e-11


class TestKernelBoundStability:
    def test_weak_singularity_bound(self, lens_squared_system):
        # max |G| |zeta-z|^{1-alpha} finite and stable under sample doubling
        system = lens_squared_system
        alpha = system.alpha
        vals = {}
        for m in (60, 120):
            best = 0.0
            for k in range(system.n):
                zeta = system.sample_J(k, m)
                z = np.concatenate([system.interior_samples(m, seed=1),
                                    system.sample_J(k, m // 2)])
                G = kernel_G(system.maps[k], zeta[:, None], z[None, :])
                d = np.abs(zeta[:, None] - z[None, :])
                mask = d > 0
                best = max(best, float((np.abs(G[mask]) * d[mask] ** (1 - alpha)).max()))
            vals[m] = best
        assert np.isfinite(vals[60]) and np.isfinite(vals[120])
        assert abs(vals[120] - vals[60]) <= 0.2 * max(vals.values())


def test_discrete_operator_csv(tmp_path, circle_rule):
    op = nystrom_matrix(lambda zeta, z: np.ones(np.broadcast_shapes(
        np.shape(zeta), np.shape(z))), circle_rule, np.array([0.0, 0.5]))
    path = tmp_path / "op.csv"
    op.to_csv(path)
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 2
    assert len(lines[0].split(",")) == 2 * circle_rule.n_nodes
