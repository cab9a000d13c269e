"""Parameter-sweep harness: assemble the reconstruction operator for a
family of map systems sharing one geometry and verify the Lipschitz-in-
C^{1+alpha} operator-norm continuity bounds.

Operator distance is the spectral norm of the Nystrom matrices on the shared
node set (the declared proxy for the uncomputable H-infinity operator norm);
map distance is the C^{1+alpha} metric: sup|phi'_eps - phi'_delta| plus the
discrete Hoelder seminorm of the difference.  The seminorm is a lower bound,
which sits in the denominator of the ratios, so the fitted constant can only
be overestimated - the conservative direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch
from .decomposition import (
    TWO_PI_I,
    apply_Fk,
    assemble_remainder,
    plan_decomposition,
    random_analytic_density,
)
from .geometry import build_partition, validate_admissible
from .transforms import build_quadrature, holder_seminorm, kernel_G


@dataclass
class MapFamily:
    epsilons: list
    systems: list
    validated: bool = False

    def __post_init__(self):
        if len(self.epsilons) != len(self.systems):
            raise ShapeMismatch("one system per epsilon required")

    def validate(self, grid_density=128):
        base = self.systems[0]
        for eps, system in zip(self.epsilons, self.systems):
            if system.boundary.n_arcs != base.boundary.n_arcs:
                raise ShapeMismatch("family members do not share the geometry")
            for a, b in zip(system.boundary.arcs, base.boundary.arcs):
                if len(a.coeffs) != len(b.coeffs) or np.abs(a.coeffs - b.coeffs).max() > 1e-13:
                    raise ShapeMismatch("family members do not share the geometry")
            report = validate_admissible(system, grid_density)
            if not report.all_passed:
                failed = [c.name for c in report.checks if not c.passed]
                raise ShapeMismatch(
                    f"member eps={eps} fails admissibility: {failed}")
        self.validated = True
        return self


def build_family(builder, epsilons, validate=True, grid_density=128):
    fam = MapFamily(list(epsilons), [builder(e) for e in epsilons])
    return fam.validate(grid_density) if validate else fam


@dataclass
class ContinuityReport:
    rows: list                  # (eps, delta, opdist, cdist, ratio)
    c_fit: float
    spread: float               # (max - min)/max over the pair ratios
    fk_norms: dict              # eps -> per-k operator norm estimates
    norm_spread: float

    def as_dict(self):
        return {
            "rows": [{"eps": e, "delta": d, "opdist": o, "cdist": c, "ratio": r}
                     for e, d, o, c, r in self.rows],
            "c_fit": self.c_fit,
            "ratio_spread": self.spread,
            "fk_norms": {str(k): v for k, v in self.fk_norms.items()},
            "fk_norm_spread": self.norm_spread,
        }


def _cdist_grid(system, k, n_boundary=160, n_out=48, n_interior=220, seed=0):
    pts = [system.sample_J(k, n_boundary),
           system.outward_samples(k, n_out, offsets=(0.25, 0.75)),
           system.interior_samples(n_interior, seed=seed)]
    return np.concatenate(pts)


def map_distance(system_a, system_b, alpha, grids):
    """max_k of sup|dphi_a - dphi_b| + discrete C^alpha seminorm of the
    difference, over per-k grids of closure(Omega_k)."""
    worst = 0.0
    for k, grid in enumerate(grids):
        da = system_a.maps[k].df(grid)
        db = system_b.maps[k].df(grid)
        diff = da - db
        sup = float(np.abs(diff).max())
        semi = holder_seminorm(grid, diff, alpha)
        worst = max(worst, sup + semi)
    return worst


def sweep(family, base_panels=8, grading_depth=8, n_densities=6,
          disk_grid=48, seed=0):
    """Assemble L_eps per member and compare all adjacent and endpoint pairs."""
    if not family.validated:
        family.validate()
    base = family.systems[0]
    junctions = list(range(len(base.corners)))
    rule = build_quadrature(base.boundary, base_panels, grading_depth,
                            grade_junctions=junctions)
    plans = [plan_decomposition(s, build_partition(s, 0.25), rule)
             for s in family.systems]
    Ks = [assemble_remainder(p).matrix for p in plans]
    grids = [_cdist_grid(base, k, seed=seed) for k in range(base.n)]

    m = len(family.epsilons)
    pairs = [(i, i + 1) for i in range(m - 1)]
    if m > 2:
        pairs.append((0, m - 1))
    rows = []
    for i, j in pairs:
        opdist = float(np.linalg.norm(Ks[j] - Ks[i], 2))
        cdist = map_distance(family.systems[i], family.systems[j],
                             base.alpha, grids)
        ratio = opdist / cdist if cdist > 0 else 0.0
        rows.append((family.epsilons[i], family.epsilons[j], opdist, cdist, ratio))
    ratios = [r for *_, r in rows if r > 0]
    c_fit = max(ratios) if ratios else 0.0
    spread = (max(ratios) - min(ratios)) / max(ratios) if ratios else 0.0

    # per-eps F_k norm estimates: sup over unit test densities of the sup of
    # |F_k(f)|/(2 pi) on a disk grid
    th = np.linspace(0, 2 * np.pi, disk_grid, endpoint=False)
    ring = 0.9 * np.exp(1j * th)
    densities = [random_analytic_density(rule, seed + s) for s in range(n_densities)]
    fk_norms = {}
    for eps, plan in zip(family.epsilons, plans):
        per_k = []
        for k in range(plan.n):
            best = 0.0
            for f in densities:
                vals = apply_Fk(plan, f, k).evaluate(ring) / TWO_PI_I
                best = max(best, float(np.abs(vals).max()))
            per_k.append(best)
        fk_norms[eps] = per_k
    flat = [v for per_k in fk_norms.values() for v in per_k]
    norm_spread = (max(flat) - min(flat)) / max(flat) if flat else 0.0
    return ContinuityReport(rows, c_fit, spread, fk_norms, norm_spread)


def kernel_family_bound(family, n_pairs=10000, seed=0):
    """Empirical constant in the parametrised kernel-difference bound.

    Samples (zeta in J_k, z in closure(Omega), eps, delta) and maximises
    |G_eps(zeta,z) - G_delta(zeta,z)| / (||phi'_eps - phi'_delta||_{C^alpha}
    |zeta - z|^{alpha-1}); the identity parts of the two G kernels cancel,
    so the difference equals the kernel pair in the lemma.
    """
    if not family.validated:
        family.validate()
    base = family.systems[0]
    rng = np.random.default_rng(seed)
    alpha = base.alpha
    grids = [_cdist_grid(base, k, seed=seed) for k in range(base.n)]
    interior = base.interior_samples(512, seed=seed + 1)
    best = 0.0
    m = len(family.epsilons)
    per_k = max(1, n_pairs // base.n)
    for k in range(base.n):
        zeta_pool = base.sample_J(k, 256)
        z_pool = np.concatenate([interior, base.sample_J(k, 64)])
        norms = {}
        for _ in range(per_k):
            i, j = rng.integers(0, m, size=2)
            if i == j:
                continue
            key = (min(i, j), max(i, j))
            if key not in norms:
                da = family.systems[i].maps[k].df(grids[k])
                db = family.systems[j].maps[k].df(grids[k])
                diff = da - db
                norms[key] = float(np.abs(diff).max()) + holder_seminorm(
                    grids[k], diff, alpha)
            cn = norms[key]
            if cn == 0:
                continue
            zeta = zeta_pool[rng.integers(0, len(zeta_pool))]
            z = z_pool[rng.integers(0, len(z_pool))]
            ga = kernel_G(family.systems[i].maps[k], zeta, z)
            gb = kernel_G(family.systems[j].maps[k], zeta, z)
            dist = abs(zeta - z)
            if dist == 0.0:
                if alpha < 1.0:
                    continue            # denominator infinite, ratio 0
                denom = cn              # |zeta-z|^0 with the regularized diagonal
            else:
                denom = cn * dist ** (alpha - 1.0)
            best = max(best, abs(ga - gb) / denom)
    return float(best)
