"""Bounded extension to the polydisk: exceptional-set detection, the
regularised Fredholm solve, jet-matching polynomial corrections, and the
certified sup-norm bound of the assembled extension.

The extension of a function f on the boundary curve is
F(w) = (2 pi i)^{-1} sum_k F_k(g)(w_k) + P(w), where g solves the remainder
equation for the jet-corrected pullback and P is a polynomial matching the
ambient jets of f at the images of the exceptional points.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ClusterAmbiguity,
    IllConditioned,
    JetMismatch,
    NoConvergence,
    OutsidePolydisk,
    ShapeMismatch,
)
from .decomposition import (
    TWO_PI_I,
    apply_Fk,
    assemble_remainder,
    boundary_reconstruction,
)
from .geometry import points_inside
from .transforms import BoundaryDensity


# ----------------------------------------------------------------------
# Functions on the curve
# ----------------------------------------------------------------------

class CurveFunction:
    """A function on the curve Phi(Omega), given as an ambient expression in
    w1..wn, an ambient callable, or z-parametrised samples ("curve data")."""

    def __init__(self, n, ambient=None, curve_data=None, declared_jets=None,
                 label=""):
        self.n = n
        self.ambient = ambient            # callable W (..., n) -> complex
        self.curve_data = curve_data      # callable z -> complex (pullback data)
        self.declared_jets = declared_jets or {}
        self.label = label

    @classmethod
    def from_expression(cls, text, n):
        from .expressions import parse_expr

        expr = parse_expr(text)
        names = [f"w{i + 1}" for i in range(n)]
        unknown = expr.variables() - set(names)
        if unknown:
            raise ShapeMismatch(f"expression uses unknown variables {unknown}")

        def ambient(W):
            W = np.asarray(W, dtype=complex)
            vars = {names[i]: W[..., i] for i in range(n)}
            out = np.asarray(expr.eval(**vars), dtype=complex)
            if out.shape != W.shape[:-1]:
                out = np.broadcast_to(out, W.shape[:-1]).copy()
            return out

        return cls(n, ambient=ambient, label=text)

    @property
    def is_ambient(self):
        return self.ambient is not None

    def pullback(self, system, z):
        """f(Phi(z)) for points z in the domain plane."""
        if self.ambient is not None:
            return self.ambient(phi_image(system, z))
        if self.curve_data is not None:
            return np.asarray(self.curve_data(z), dtype=complex)
        raise ShapeMismatch("curve function has neither ambient nor curve data")


def phi_image(system, z):
    """Phi(z) as an (..., n) array."""
    z = np.asarray(z, dtype=complex)
    return np.stack([np.asarray(m.f(z), dtype=complex) for m in system.maps], axis=-1)


def phi_derivative(system, z):
    z = np.asarray(z, dtype=complex)
    return np.stack([np.asarray(m.df(z), dtype=complex) for m in system.maps], axis=-1)


# ----------------------------------------------------------------------
# Exceptional set
# ----------------------------------------------------------------------

@dataclass
class ExceptionalPoint:
    z: complex
    kind: str                 # "critical" | "glued"
    order: int = 2
    partner: complex = None


@dataclass
class ExceptionalSet:
    points: list = field(default_factory=list)
    warning: str = ""

    def __len__(self):
        return len(self.points)

    def with_order(self, order):
        return ExceptionalSet([ExceptionalPoint(p.z, p.kind, order, p.partner)
                               for p in self.points], self.warning)


CRIT_TOL = 1e-8
GLUE_TOL = 1e-10
SEPARATION = 1e-3


def detect_exceptional(system, grid=24):
    """Common zeros of all phi_k' (Newton on phi_1', grid-seeded) and glued
    pairs (nearest-neighbour search on Phi images, Gauss-Newton refinement).

    A grid below 4 cannot seed Newton reliably; the set is returned empty
    with a coverage warning, as documented.
    """
    if grid < 4:
        return ExceptionalSet([], warning="grid too coarse to seed Newton")
    boundary_pts = system.boundary.sample(512)
    xlo, xhi = boundary_pts.real.min(), boundary_pts.real.max()
    ylo, yhi = boundary_pts.imag.min(), boundary_pts.imag.max()
    xs = np.linspace(xlo, xhi, grid)
    ys = np.linspace(ylo, yhi, grid)
    cand = (xs[:, None] + 1j * ys[None, :]).ravel()
    inside = points_inside(cand, boundary_pts)
    near = np.abs(cand[:, None] - boundary_pts[None, :]).min(axis=1)
    seeds = cand[inside & (near > 5e-2)]
    scale = float(np.median(np.abs(phi_derivative(system, boundary_pts))))

    crits = []
    if len(seeds):
        m = np.abs(phi_derivative(system, seeds)).sum(axis=1)
        order = np.argsort(m)
        phi1 = system.maps[0]
        for i in order[: max(8, grid // 2)]:
            z = complex(seeds[i])
            ok = True
            for _ in range(60):
                d1, d2 = phi1.df(z), phi1.d2f(z)
                if abs(d2) < 1e-14:
                    ok = False
                    break
                step = d1 / d2
                z = z - step
                if abs(step) < 1e-14:
                    break
            if not ok or not bool(points_inside(z, boundary_pts)[0]):
                continue
            if np.abs(phi_derivative(system, np.array([z]))).max() < CRIT_TOL * scale:
                crits.append(z)
    crits = _dedupe(crits)

    glued = []
    if len(seeds) >= 2:
        imgs = phi_image(system, seeds)
        d_img = np.linalg.norm(imgs[:, None, :] - imgs[None, :, :], axis=-1)
        d_dom = np.abs(seeds[:, None] - seeds[None, :])
        iu = np.triu_indices(len(seeds), k=1)
        close = (d_img[iu] < 0.05 * max(1.0, np.abs(imgs).max())) & (d_dom[iu] > 5 * SEPARATION)
        for a, b in zip(iu[0][close], iu[1][close]):
            pq = _refine_glued(system, complex(seeds[a]), complex(seeds[b]))
            if pq is None:
                continue
            p, q = pq
            if not (points_inside(p, boundary_pts)[0] and points_inside(q, boundary_pts)[0]):
                continue
            if abs(p - q) > SEPARATION:
                glued.append((p, q))
    glued = _dedupe_pairs(glued)

    pts = [ExceptionalPoint(z, "critical") for z in crits]
    for p, q in glued:
        pts.append(ExceptionalPoint(p, "glued", partner=q))
    _check_separation(pts)
    return ExceptionalSet(pts)


def _dedupe(zs):
    out = []
    for z in zs:
        if all(abs(z - w) > SEPARATION for w in out):
            out.append(z)
    return out


def _dedupe_pairs(pairs):
    out = []
    for p, q in pairs:
        p, q = sorted((p, q), key=lambda v: (v.real, v.imag))
        if all(abs(p - a) > SEPARATION or abs(q - b) > SEPARATION for a, b in out):
            out.append((p, q))
    return out


def _check_separation(points):
    for a, b in itertools.combinations(points, 2):
        if abs(a.z - b.z) < SEPARATION:
            raise ClusterAmbiguity(
                "two exceptional points within 1e-3; reparametrise the scenario")


def _refine_glued(system, p, q, iters=60):
    """Gauss-Newton on Phi(p) - Phi(q) = 0."""
    for _ in range(iters):
        r = phi_image(system, np.array([p]))[0] - phi_image(system, np.array([q]))[0]
        if np.linalg.norm(r) < GLUE_TOL / 10:
            break
        Jp = phi_derivative(system, np.array([p]))[0]
        Jq = -phi_derivative(system, np.array([q]))[0]
        J = np.stack([Jp, Jq], axis=1)
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        p = p + step[0]
        q = q + step[1]
        if np.abs(step).max() < 1e-15:
            break
    r = phi_image(system, np.array([p]))[0] - phi_image(system, np.array([q]))[0]
    if np.linalg.norm(r) < GLUE_TOL and abs(p - q) > SEPARATION:
        return p, q
    return None


# ----------------------------------------------------------------------
# Fredholm solve
# ----------------------------------------------------------------------

@dataclass
class FredholmSolution:
    g: BoundaryDensity
    cokernel_basis: np.ndarray
    residual: float
    tau: float
    sigma: np.ndarray


def fredholm_solve(K, f, tau=1e-8):
    """Truncated-SVD solve of (I - K_N) g = f with explicit cokernel.

    Singular values below tau are zeroed; their left vectors form the
    cokernel basis.  A spectral gap of at least 10 between kept and dropped
    values is mandatory; anything tighter raises IllConditioned.
    """
    if not (0.0 < tau < 1.0):
        raise ValueError("tau must lie in (0, 1)")
    M = np.eye(K.matrix.shape[0], dtype=complex) - K.matrix
    if M.shape[0] != M.shape[1]:
        raise ShapeMismatch("square operator required")
    values = f.values if isinstance(f, BoundaryDensity) else np.asarray(f, dtype=complex)
    U, s, Vh = np.linalg.svd(M)
    drop = s < tau
    if drop.any() and (~drop).any():
        gap = s[~drop].min() / s[drop].max()
        if gap < 10.0:
            raise IllConditioned(
                f"singular values cluster across tau (gap {gap:.2f} < 10); move tau")
    inv = np.where(drop, 0.0, 1.0 / np.where(drop, 1.0, s))
    g = Vh.conj().T @ (inv * (U.conj().T @ values))
    residual = float(np.abs(M @ g - values).max() / max(1.0, np.abs(values).max()))
    rule = f.rule if isinstance(f, BoundaryDensity) else None
    g_density = BoundaryDensity(rule, g, provenance="fredholm solve") if rule else g
    return FredholmSolution(g_density, U[:, drop], residual, tau, s)


# ----------------------------------------------------------------------
# Jets and the polynomial correction
# ----------------------------------------------------------------------

def _multi_indices(n, max_total):
    out = []
    for total in range(max_total + 1):
        for β in itertools.product(range(total + 1), repeat=n):
            if sum(β) == total:
                out.append(β)
    return out


def ambient_jets(fn, center, order, radius=0.08, m=32):
    """Taylor coefficients a_beta (|beta| <= order) of fn at center in C^n,
    via tensor FFT on small circles; D^beta = beta! * a_beta."""
    n = len(center)
    th = 2 * np.pi * np.arange(m) / m
    rings = [center[i] + radius * np.exp(1j * th) for i in range(n)]
    grids = np.meshgrid(*rings, indexing="ij")
    W = np.stack(grids, axis=-1)
    vals = fn(W)
    C = np.fft.fftn(vals) / m**n
    jets = {}
    for β in _multi_indices(n, order):
        jets[β] = complex(C[β] / radius ** sum(β))
    return jets


@dataclass
class JetPolynomial:
    n_vars: int
    monomials: list
    coeffs: np.ndarray

    @classmethod
    def zero(cls, n_vars):
        return cls(n_vars, [(0,) * n_vars], np.zeros(1, dtype=complex))

    @property
    def total_degree(self):
        nz = [sum(m) for m, c in zip(self.monomials, self.coeffs) if abs(c) > 0]
        return max(nz) if nz else 0

    def l1_norm(self):
        return float(np.abs(self.coeffs).sum())

    def eval(self, W):
        W = np.asarray(W, dtype=complex)
        out = np.zeros(W.shape[:-1], dtype=complex)
        for m, c in zip(self.monomials, self.coeffs):
            if c == 0:
                continue
            term = np.full(W.shape[:-1], c, dtype=complex)
            for i, p in enumerate(m):
                if p:
                    term = term * W[..., i] ** p
            out = out + term
        return out

    def deriv_at(self, w0, alpha):
        """D^alpha of the polynomial at the point w0."""
        total = 0.0 + 0.0j
        for m, c in zip(self.monomials, self.coeffs):
            if c == 0:
                continue
            term = c
            ok = True
            for i, (p, a) in enumerate(zip(m, alpha)):
                if p < a:
                    ok = False
                    break
                fac = 1.0
                for r in range(a):
                    fac *= p - r
                term = term * fac * w0[i] ** (p - a)
            if ok:
                total += term
        return complex(total)


def _jet_targets(f, exceptional, system):
    """(point, multi-index) -> prescribed D^beta value at w_j = Phi(z_j)."""
    n = system.n
    targets = {}
    centers = []
    for j, pt in enumerate(exceptional.points):
        w0 = phi_image(system, np.array([pt.z]))[0]
        centers.append(w0)
        if f.is_ambient:
            jets = ambient_jets(f.ambient, w0, pt.order)
            for β, a in jets.items():
                fac = 1.0
                for b in β:
                    fac *= _fact(b)
                targets[(j, β)] = a * fac
        else:
            dec = f.declared_jets.get(j)
            if dec is None:
                raise JetMismatch(f"no declared jets for exceptional point {j}")
            for β in _multi_indices(n, pt.order):
                targets[(j, β)] = complex(dec.get(β, 0.0))
    # gluing consistency: identical image points must carry identical jets
    for j1 in range(len(centers)):
        for j2 in range(j1 + 1, len(centers)):
            if np.linalg.norm(centers[j1] - centers[j2]) < GLUE_TOL:
                for β in _multi_indices(n, min(exceptional.points[j1].order,
                                               exceptional.points[j2].order)):
                    if abs(targets[(j1, β)] - targets[(j2, β)]) > 1e-9:
                        raise JetMismatch(
                            "glued images carry conflicting jet values; "
                            "f is not a function on the curve")
    return targets, centers


def _fact(b):
    out = 1
    for r in range(2, b + 1):
        out *= r
    return out


def jet_correction(f, exceptional, system, max_degree=None):
    """Least-degree polynomial matching the ambient jets of f at the images
    of the exceptional points (graded-lex monomials, least squares via QR)."""
    n = system.n
    if not exceptional.points:
        return JetPolynomial.zero(n)
    targets, centers = _jet_targets(f, exceptional, system)
    keys = sorted(targets, key=lambda jb: (jb[0], sum(jb[1]), jb[1]))
    rhs = np.array([targets[k] for k in keys])
    scale = max(1.0, np.abs(rhs).max())
    max_total = max(pt.order for pt in exceptional.points) * max(1, len(exceptional.points))
    if max_degree is not None:
        max_total = max_degree
    monos, coef = None, None
    for degree in range(0, max(1, max_total) + 1):
        monos = _multi_indices(n, degree)
        A = np.zeros((len(keys), len(monos)), dtype=complex)
        for r, (j, β) in enumerate(keys):
            for c, m in enumerate(monos):
                A[r, c] = _monomial_deriv_at(m, centers[j], β)
        coef, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        if np.abs(A @ coef - rhs).max() < 1e-10 * scale:
            break
    return JetPolynomial(n, monos, coef)


def _monomial_deriv_at(m, w0, alpha):
    term = 1.0 + 0.0j
    for i, (p, a) in enumerate(zip(m, alpha)):
        if p < a:
            return 0.0 + 0.0j
        fac = 1.0
        for r in range(a):
            fac *= p - r
        term *= fac * w0[i] ** (p - a)
    return term


# ----------------------------------------------------------------------
# The extension itself
# ----------------------------------------------------------------------

@dataclass
class PolydiskExtension:
    coordinate_terms: list
    correction: JetPolynomial
    norm_bound: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.coordinate_terms)


def evaluate_extension(ext, w):
    """F(w) = (2 pi i)^{-1} sum_k F_k(w_k) + P(w) for w in the open polydisk."""
    w = np.asarray(w, dtype=complex)
    single = w.ndim == 1
    W = w[None, :] if single else w
    if W.shape[-1] != ext.n:
        raise ShapeMismatch("point dimension does not match the extension")
    if (np.abs(W) >= 1.0).any():
        raise OutsidePolydisk("evaluation point outside the open polydisk")
    out = np.zeros(W.shape[0], dtype=complex)
    for k, term in enumerate(ext.coordinate_terms):
        out += term.evaluate(W[:, k]) / TWO_PI_I
    out += ext.correction.eval(W)
    return complex(out[0]) if single else out


def certify_norm_bound(ext, grid=64):
    """Upper bound for the Schur-Agler norm: sum of per-coordinate sup norms
    on a radius-(1 - 1/grid) circle (inflated 1%) plus the l1 coefficient
    norm of the polynomial correction."""
    if grid < 64:
        raise ValueError("grid must be at least 64")
    r = 1.0 - 1.0 / grid
    th = np.linspace(0, 2 * np.pi, grid, endpoint=False)
    ring = r * np.exp(1j * th)
    bound = 0.0
    for term in ext.coordinate_terms:
        vals = term.evaluate(ring) / TWO_PI_I
        bound += 1.01 * float(np.abs(vals).max())
    bound += ext.correction.l1_norm()
    return bound


def build_extension(plan, f, tau=1e-8, tolerance=1e-6, orders=(2, 4, 8),
                    use_jet_correction=True, detect_grid=24, remainder=None,
                    norm_grid=64):
    """Detect the exceptional set, jet-correct, solve, assemble and certify.

    The convergence criterion is the sup residual of the independent
    boundary reconstruction of the corrected pullback, which honestly
    reflects range obstructions even when (I - K_N) is numerically
    invertible.
    """
    system = plan.system
    rule = plan.rule
    K = assemble_remainder(plan) if remainder is None else remainder
    exceptional = detect_exceptional(system, detect_grid)
    apply_jets = use_jet_correction and len(exceptional.points) > 0
    order_ladder = orders if apply_jets else (0,)
    history = []
    sol = None
    P = JetPolynomial.zero(system.n)
    f_vals = f.pullback(system, rule.nodes)
    for order in order_ladder:
        if apply_jets and order:
            P = jet_correction(f, exceptional.with_order(order), system)
            corr = P.eval(phi_image(system, rule.nodes))
        else:
            P = JetPolynomial.zero(system.n)
            corr = 0.0
        ftilde = BoundaryDensity(rule, f_vals - corr, provenance="jet-corrected pullback")
        sol = fredholm_solve(K, ftilde, tau)
        rec = boundary_reconstruction(plan, sol.g)
        resid = float(np.abs(ftilde.values - rec).max()
                      / max(1.0, np.abs(ftilde.values).max()))
        history.append({"order": int(order), "solve_residual": sol.residual,
                        "boundary_residual": resid,
                        "cokernel_dim": int(sol.cokernel_basis.shape[1])})
        if resid < tolerance:
            break
    else:
        raise NoConvergence(
            f"residual above {tolerance} at every order in {order_ladder}; "
            f"history: {history}")
    if sol.cokernel_basis.shape[1] > 0 and apply_jets:
        n_constraints = sum(len(_multi_indices(system.n, p.order))
                            for p in exceptional.points)
        if sol.cokernel_basis.shape[1] > n_constraints:
            raise NoConvergence(
                f"cokernel dimension {sol.cokernel_basis.shape[1]} exceeds the "
                f"jet obstruction count {n_constraints}; refusing to guess")
    terms = [apply_Fk(plan, sol.g, k) for k in range(plan.n)]
    ext = PolydiskExtension(terms, P, 0.0, diagnostics={
        "history": history,
        "sigma": sol.sigma,
        "exceptional": [(p.z, p.kind, p.order) for p in exceptional.points],
        "tau": tau,
    })
    ext.norm_bound = certify_norm_bound(ext, norm_grid)
    return ext
