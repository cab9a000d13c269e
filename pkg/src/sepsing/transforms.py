"""Composite Gauss-Legendre quadrature on analytic arcs, plain and modified
Cauchy transforms with adaptive close evaluation, the regularised kernel
G(zeta, z), Nystrom assembly and discrete Hoelder seminorms.

No 1/(2*pi*i) factor anywhere in this module: transforms return the raw
contour integrals.  The single normalisation happens in the decomposition
layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    AdaptiveDepthExceeded,
    MapCollision,
    NonFiniteEntry,
    OnContour,
    OnImageContour,
    ShapeMismatch,
)

PANEL_ORDER = 16


@lru_cache(maxsize=8)
def _gl(order=PANEL_ORDER):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


@lru_cache(maxsize=8)
def _bary_weights(order=PANEL_ORDER):
    x, _ = _gl(order)
    w = np.ones(order)
    for j in range(order):
        w[j] = 1.0 / np.prod(x[j] - np.delete(x, j))
    return w


@lru_cache(maxsize=8)
def _diff_matrix(order=PANEL_ORDER):
    """Spectral differentiation at the GL nodes (d/dx on [-1,1])."""
    x, _ = _gl(order)
    w = _bary_weights(order)
    D = np.zeros((order, order))
    for i in range(order):
        for j in range(order):
            if i != j:
                D[i, j] = (w[j] / w[i]) / (x[i] - x[j])
        D[i, i] = -D[i].sum()
    return D


def _bary_eval_matrix(xq, order=PANEL_ORDER):
    """Rows evaluate the GL-node interpolant at query points xq in [-1,1]."""
    x, _ = _gl(order)
    w = _bary_weights(order)
    xq = np.atleast_1d(np.asarray(xq, dtype=float))
    M = np.zeros((len(xq), order))
    for i, q in enumerate(xq):
        diff = q - x
        hit = np.nonzero(np.abs(diff) < 1e-14)[0]
        if len(hit):
            M[i, hit[0]] = 1.0
        else:
            terms = w / diff
            M[i] = terms / terms.sum()
    return M


class PanelSet:
    """Composite Gauss-Legendre panels over a list of analytic arcs."""

    def __init__(self, arcs, panel_arc, panel_t0, panel_t1):
        self.arcs = list(arcs)
        self.panel_arc = np.asarray(panel_arc, dtype=int)
        self.panel_t0 = np.asarray(panel_t0, dtype=float)
        self.panel_t1 = np.asarray(panel_t1, dtype=float)
        x, wg = _gl()
        half = (self.panel_t1 - self.panel_t0) / 2
        mid = (self.panel_t1 + self.panel_t0) / 2
        self.t = mid[:, None] + half[:, None] * x[None, :]
        P = len(self.panel_arc)
        self.zeta = np.empty((P, PANEL_ORDER), dtype=complex)
        self.dgam = np.empty((P, PANEL_ORDER), dtype=complex)
        for i in np.unique(self.panel_arc):
            m = self.panel_arc == i
            self.zeta[m] = self.arcs[i].point(self.t[m])
            self.dgam[m] = self.arcs[i].derivative(self.t[m])
        self.w = self.dgam * (half[:, None] * wg[None, :])

    @classmethod
    def build(cls, arcs, edges_per_arc):
        panel_arc, t0s, t1s = [], [], []
        for i, edges in enumerate(edges_per_arc):
            for a, b in zip(edges[:-1], edges[1:]):
                panel_arc.append(i)
                t0s.append(a)
                t1s.append(b)
        return cls(arcs, panel_arc, t0s, t1s)

    @property
    def n_panels(self):
        return len(self.panel_arc)

    @property
    def n_nodes(self):
        return self.n_panels * PANEL_ORDER

    def flat_nodes(self):
        return self.zeta.reshape(-1), self.w.reshape(-1)

    def panel_lengths(self):
        return np.abs(self.w).sum(axis=1)

    def eval_sub(self, p, a, b):
        """Fresh GL nodes on the sub-interval [a,b] of panel p's arc."""
        x, wg = _gl()
        t = (a + b) / 2 + (b - a) / 2 * x
        arc = self.arcs[self.panel_arc[p]]
        zeta = arc.point(t)
        w = arc.derivative(t) * ((b - a) / 2 * wg)
        return t, zeta, w

    def interp_from_panel(self, p, tq):
        """Matrix taking the panel's 16 samples to values at parameters tq."""
        a, b = self.panel_t0[p], self.panel_t1[p]
        xq = (2 * np.asarray(tq) - (a + b)) / (b - a)
        return _bary_eval_matrix(xq)

    def node_derivatives(self, values):
        """d(values)/dzeta panelwise via spectral differentiation."""
        D = _diff_matrix()
        vals = values.reshape(self.n_panels, PANEL_ORDER)
        half = (self.panel_t1 - self.panel_t0)[:, None] / 2
        dvdt = vals @ D.T / half
        return (dvdt / self.dgam).reshape(-1)

    def locate(self, arc_idx, t):
        """Panel index containing parameter t on the given arc."""
        m = np.nonzero((self.panel_arc == arc_idx)
                       & (self.panel_t0 <= t + 1e-15)
                       & (t <= self.panel_t1 + 1e-15))[0]
        if len(m) == 0:
            raise ShapeMismatch("parameter outside the panelised range")
        return int(m[0])


# ----------------------------------------------------------------------
# Quadrature rule over a whole boundary
# ----------------------------------------------------------------------

@dataclass
class QuadratureRule:
    boundary: object
    panels: PanelSet
    base_panels: int
    grading_depth: int

    def __post_init__(self):
        ps = self.panels
        self.nodes = ps.zeta.reshape(-1)
        self.weights = ps.w.reshape(-1)
        self.node_arc = np.repeat(ps.panel_arc, PANEL_ORDER)
        self.node_t = ps.t.reshape(-1)
        self.node_panel = np.repeat(np.arange(ps.n_panels), PANEL_ORDER)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def panel_tree(self):
        return list(zip(self.panels.panel_arc.tolist(),
                        self.panels.panel_t0.tolist(),
                        self.panels.panel_t1.tolist()))

    def nodes_on_arcs(self, arc_indices):
        return np.isin(self.node_arc, list(arc_indices))

    def panels_on_arcs(self, arc_indices):
        return np.nonzero(np.isin(self.panels.panel_arc, list(arc_indices)))[0]

    def arclengths(self):
        out = np.empty(self.n_nodes)
        for i in np.unique(self.node_arc):
            m = self.node_arc == i
            out[m] = self.boundary.arclength_at(int(i), self.node_t[m])
        return out


def _graded_edges(base_panels, depth, grade_start, grade_end):
    """Dyadic ratio-1/2 grading of the first/last base panel."""
    edges = list(np.linspace(0.0, 1.0, base_panels + 1))
    h = 1.0 / base_panels
    if depth > 0 and grade_end:
        # replace [1-h, 1] by [1-h, 1-h/2], ..., [1-h/2^depth, 1]
        sub = [1.0 - h / 2**j for j in range(1, depth + 1)]
        edges = edges[:-1] + sub + [1.0]
    if depth > 0 and grade_start:
        sub = [h / 2**j for j in range(depth, 0, -1)]
        edges = [0.0] + sub + edges[1:]
    return np.array(sorted(set(edges)))


def build_quadrature(boundary, base_panels=8, corner_grading_depth=0, grade_junctions=None):
    """Composite GL-16 rule, panels dyadically graded toward corners.

    grade_junctions: junction indices to grade toward; default = every
    junction whose interior angle differs from pi (a true corner).
    """
    if base_panels < 2:
        raise ValueError("need at least 2 base panels per arc")
    if corner_grading_depth > 30:
        raise ValueError("grading depth above 30 is not supported")
    n = boundary.n_arcs
    if grade_junctions is None:
        grade_junctions = [j for j in range(len(boundary.corner_angles))
                           if not boundary.is_smooth_junction(j)]
    grade_junctions = set(grade_junctions)
    edges_per_arc = []
    for i in range(n):
        # junction j sits at the end of arc j; junction i-1 at the start of arc i
        grade_end = i in grade_junctions and n > 1
        grade_start = ((i - 1) % n) in grade_junctions and n > 1
        edges_per_arc.append(_graded_edges(base_panels, corner_grading_depth,
                                           grade_start, grade_end))
    ps = PanelSet.build(list(boundary.arcs), edges_per_arc)
    return QuadratureRule(boundary, ps, base_panels, corner_grading_depth)


# ----------------------------------------------------------------------
# Densities
# ----------------------------------------------------------------------

@dataclass
class BoundaryDensity:
    rule: QuadratureRule
    values: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.rule.n_nodes,):
            raise ShapeMismatch("density length does not match the rule")
        if not np.isfinite(self.values).all():
            raise NonFiniteEntry("density contains non-finite samples")

    @classmethod
    def from_function(cls, rule, fn, provenance="expression"):
        return cls(rule, np.asarray(fn(rule.nodes), dtype=complex) + 0j, provenance)

    def sup_norm(self):
        return float(np.abs(self.values).max())


# ----------------------------------------------------------------------
# Kernel G and transforms
# ----------------------------------------------------------------------

def kernel_G(phi, zeta, z, reg_rel=1e-6):
    """G(zeta, z) = phi'(zeta)/(phi(zeta)-phi(z)) - 1/(zeta-z).

    Within relative distance reg_rel the second-order Taylor ratio
    phi''(zeta) / (2 phi'(zeta) + phi''(zeta)(z-zeta)) is used, which is
    exact at the removable diagonal for analytic phi.
    """
    zeta = np.asarray(zeta, dtype=complex)
    z = np.asarray(z, dtype=complex)
    zeta_b, z_b = np.broadcast_arrays(zeta, z)
    scale = max(1.0, float(np.abs(zeta_b).max(initial=0.0)),
                float(np.abs(z_b).max(initial=0.0)))
    d = z_b - zeta_b
    near = np.abs(d) <= reg_rel * scale
    fz, fzeta = phi.f(z_b), phi.f(zeta_b)
    df = phi.df(zeta_b)
    d2f = phi.d2f(zeta_b)
    den_map = fzeta - fz
    bad = (~near) & (np.abs(den_map) < 1e-14 * max(1.0, float(np.abs(fzeta).max(initial=0.0))))
    if bad.any():
        raise MapCollision("phi(zeta) = phi(z) with zeta != z")
    safe_map = np.where(near, 1.0, den_map)
    safe_d = np.where(near, 1.0, d)
    literal = df / safe_map + 1.0 / safe_d     # -1/(zeta-z) = +1/(z-zeta)
    regular = (d2f / 2.0) / (df + d2f * d / 2.0)
    out = np.where(near, regular, literal)
    if out.shape == ():
        return complex(out)
    return out


class _CauchyEngine:
    """Shared far-field + adaptive close evaluation for contour integrals
    of  m'(zeta) psi(zeta) / (m(zeta) - w)^{1+deriv} dzeta."""

    def __init__(self, panels, density, mapping=None, deriv=0, max_extra=20):
        self.ps = panels
        self.psi = np.asarray(density, dtype=complex).reshape(panels.n_panels, PANEL_ORDER)
        self.mapping = mapping
        self.deriv = deriv
        self.max_extra = max_extra
        if mapping is None:
            self.mz = panels.zeta
            self.mw = panels.w
        else:
            self.mz = np.asarray(mapping.f(panels.zeta), dtype=complex)
            self.mw = np.asarray(mapping.df(panels.zeta), dtype=complex) * panels.w
        self.plen = np.abs(self.mw).sum(axis=1)
        self.scale = max(1.0, float(np.abs(self.mz).max()))

    def _kernel(self, mz, w):
        if self.deriv == 0:
            return 1.0 / (mz - w)
        fact = float(np.prod(np.arange(1, self.deriv + 1)))
        return fact / (mz - w) ** (1 + self.deriv)

    def evaluate(self, targets, adaptive=True):
        w = np.atleast_1d(np.asarray(targets, dtype=complex))
        T = len(w)
        # distance of each target to each panel (min over panel node images)
        D = np.empty((self.ps.n_panels, T))
        for p in range(self.ps.n_panels):
            D[p] = np.abs(self.mz[p][:, None] - w[None, :]).min(axis=0)
        if (D.min(axis=0) < 1e-13 * self.scale).any():
            err = OnImageContour if self.mapping is not None else OnContour
            raise err("evaluation point on the (image) contour")
        # full direct sums
        flat_mz = self.mz.reshape(-1)
        flat_c = (self.mw * self.psi).reshape(-1)
        vals = (flat_c[None, :] * self._kernel(flat_mz[None, :], w[:, None])).sum(axis=1)
        if not adaptive:
            return vals
        near = D < self.plen[:, None]
        for p in np.nonzero(near.any(axis=1))[0]:
            tidx = np.nonzero(near[p])[0]
            direct = ((self.mw[p] * self.psi[p])[None, :]
                      * self._kernel(self.mz[p][None, :], w[tidx][:, None])).sum(axis=1)
            refined = self._refine(p, self.ps.panel_t0[p], self.ps.panel_t1[p],
                                   w[tidx], depth=0)
            vals[tidx] += refined - direct
        return vals

    def _refine(self, p, a, b, w, depth):
        """Adaptively integrate panel p restricted to [a,b] for targets w."""
        t, zeta, wq = self.ps.eval_sub(p, a, b)
        if self.mapping is None:
            mz, mw = zeta, wq
        else:
            mz = np.asarray(self.mapping.f(zeta), dtype=complex)
            mw = np.asarray(self.mapping.df(zeta), dtype=complex) * wq
        psi = self.ps.interp_from_panel(p, t) @ self.psi[p]
        d = np.abs(mz[:, None] - w[None, :]).min(axis=0)
        plen = np.abs(mw).sum()
        out = np.empty(len(w), dtype=complex)
        far = d >= plen
        if far.any():
            out[far] = ((mw * psi)[None, :]
                        * self._kernel(mz[None, :], w[far][:, None])).sum(axis=1)
        near = ~far
        if near.any():
            if depth >= self.max_extra:
                raise AdaptiveDepthExceeded(
                    f"adaptive refinement exceeded {self.max_extra} levels")
            mid = (a + b) / 2
            left = self._refine(p, a, mid, w[near], depth + 1)
            right = self._refine(p, mid, b, w[near], depth + 1)
            out[near] = left + right
        return out


def integrate_cauchy(panels, density, targets, mapping=None, deriv=0,
                     adaptive=True, max_extra=20):
    eng = _CauchyEngine(panels, density, mapping, deriv, max_extra)
    vals = eng.evaluate(targets, adaptive=adaptive)
    return vals if np.ndim(targets) else complex(vals[0])


def _subpanels(rule, arcs):
    """PanelSet restricted to the given arc subset (shares arc objects)."""
    if arcs is None:
        return rule.panels, slice(None)
    sel = rule.panels_on_arcs(arcs)
    ps = rule.panels
    sub = PanelSet(ps.arcs, ps.panel_arc[sel], ps.panel_t0[sel], ps.panel_t1[sel])
    idx = (np.repeat(sel * PANEL_ORDER, PANEL_ORDER)
           + np.tile(np.arange(PANEL_ORDER), len(sel)))
    return sub, idx


def cauchy_transform(psi, z, arcs=None, adaptive=True):
    """integral of psi(zeta)/(zeta - z) dzeta over the chosen arcs."""
    sub, idx = _subpanels(psi.rule, arcs)
    return integrate_cauchy(sub, psi.values[idx], z, mapping=None, adaptive=adaptive)


def modified_cauchy_transform(psi, phi, z, arcs=None, adaptive=True):
    """integral of phi'(zeta) psi(zeta)/(phi(zeta) - z) dzeta."""
    sub, idx = _subpanels(psi.rule, arcs)
    return integrate_cauchy(sub, psi.values[idx], z, mapping=phi, adaptive=adaptive)


# ----------------------------------------------------------------------
# Discrete operators
# ----------------------------------------------------------------------

@dataclass
class DiscreteOperator:
    matrix: np.ndarray
    row_points: np.ndarray
    col_points: np.ndarray
    col_weights: np.ndarray
    row_weights: np.ndarray = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.shape != (len(self.row_points), len(self.col_points)):
            raise ShapeMismatch("matrix dimensions do not match metadata")
        if not np.isfinite(self.matrix).all():
            raise NonFiniteEntry("operator matrix contains non-finite entries")

    def apply(self, values):
        return self.matrix @ np.asarray(values, dtype=complex)

    @property
    def is_square_matched(self):
        return (self.matrix.shape[0] == self.matrix.shape[1]
                and self.row_weights is not None)

    def to_csv(self, path):
        with open(path, "w") as fh:
            for row in self.matrix:
                fh.write(",".join(f"{v.real:.17e},{v.imag:.17e}" for v in row))
                fh.write("\n")


def nystrom_matrix(kernel, rule_or_panels, targets, arcs=None):
    """M[i, j] = kernel(zeta_j, z_i) * w_j acting on node samples."""
    if isinstance(rule_or_panels, QuadratureRule):
        sub, idx = _subpanels(rule_or_panels, arcs)
        zeta, w = sub.flat_nodes()
    else:
        zeta, w = rule_or_panels.flat_nodes()
    targets = np.atleast_1d(np.asarray(targets, dtype=complex))
    K = kernel(zeta[None, :], targets[:, None])
    M = np.asarray(K, dtype=complex) * w[None, :]
    if not np.isfinite(M).all():
        raise NonFiniteEntry("kernel produced non-finite entries")
    return DiscreteOperator(M, targets, zeta, w)


def holder_seminorm(points, values, alpha, block=2048):
    """max over pairs of |g(x)-g(y)| / |x-y|^alpha (a lower bound)."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    x = np.asarray(points, dtype=complex).ravel()
    g = np.asarray(values, dtype=complex).ravel()
    if len(x) < 2:
        raise ValueError("need at least two points")
    best = 0.0
    for i0 in range(0, len(x), block):
        xi = x[i0:i0 + block]
        gi = g[i0:i0 + block]
        for j0 in range(i0, len(x), block):
            xj = x[j0:j0 + block]
            gj = g[j0:j0 + block]
            dx = np.abs(xi[:, None] - xj[None, :])
            dg = np.abs(gi[:, None] - gj[None, :])
            mask = dx > 0
            if mask.any():
                best = max(best, float((dg[mask] / dx[mask] ** alpha).max()))
    return best


# ----------------------------------------------------------------------
# Cauchy sums (lazy analytic functions)
# ----------------------------------------------------------------------

@dataclass
class CauchyTerm:
    panels: PanelSet
    density: np.ndarray
    mapping: object = None    # AnalyticMap or None for the identity
    sign: float = 1.0
    label: str = ""


class CauchySum:
    """Signed sum of (modified) Cauchy integrals with stored densities.

    Evaluation is analytic off the union of the (mapped) source arcs; no
    2*pi*i normalisation is applied here.
    """

    def __init__(self, terms):
        self.terms = list(terms)

    def evaluate(self, z, adaptive=True):
        z_arr = np.atleast_1d(np.asarray(z, dtype=complex))
        total = np.zeros(len(z_arr), dtype=complex)
        for term in self.terms:
            total += term.sign * _CauchyEngine(term.panels, term.density,
                                               term.mapping).evaluate(z_arr, adaptive)
        return total if np.ndim(z) else complex(total[0])

    def evaluate_derivative(self, z, adaptive=True):
        z_arr = np.atleast_1d(np.asarray(z, dtype=complex))
        total = np.zeros(len(z_arr), dtype=complex)
        for term in self.terms:
            total += term.sign * _CauchyEngine(term.panels, term.density,
                                               term.mapping, deriv=1).evaluate(z_arr, adaptive)
        return total if np.ndim(z) else complex(total[0])

    def mean_value_deviation(self, center, radius, n=64):
        """|h(center) - trapezoid average over the circle| (analyticity check)."""
        th = np.linspace(0, 2 * np.pi, n, endpoint=False)
        ring = center + radius * np.exp(1j * th)
        hv = self.evaluate(ring)
        return abs(self.evaluate(center) - hv.mean())
