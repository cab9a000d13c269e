"""Piecewise-analytic boundary geometry and admissibility validation.

Arcs are stored spectrally: Chebyshev coefficients of the parametrisation
gamma : [0,1] -> C.  Analytic parametrisations converge geometrically, so a
coefficient tail below 1e-13 doubles as a machine-checkable analyticity
certificate.  Everything downstream (quadrature panels, corner splits, rigid
rotations) works in coefficient space where operations are exact or spectral.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from numpy.polynomial.chebyshev import Chebyshev

from .errors import (
    AngleOutOfRange,
    ChainBroken,
    DisksOverlap,
    NoValidRotation,
    OrientationError,
    SelfIntersection,
    SupportLeak,
    TooCloseToBoundary,
)

TAIL_TOL = 1e-13
SMOOTH_JUNCTION_TOL = 1e-8


@lru_cache(maxsize=32)
def _leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _cheb_fit(fn, max_degree=1024, tol=TAIL_TOL):
    """Chebyshev coefficients of fn on [0,1], resolved to relative `tol`."""
    n = 16
    while n <= max_degree:
        k = np.arange(n + 1)
        x = np.cos(np.pi * k / n)          # Chebyshev extrema on [-1,1]
        t = (x + 1.0) / 2.0
        vals = np.asarray(fn(t), dtype=complex)
        # DCT-I via FFT on the mirrored sequence
        ext = np.concatenate([vals, vals[-2:0:-1]])
        coeffs = np.fft.fft(ext) / n
        c = coeffs[: n + 1].copy()
        c[0] /= 2.0
        c[-1] /= 2.0
        scale = np.abs(c).max()
        if scale == 0:
            return np.zeros(1, dtype=complex)
        tail = np.abs(c[-2:]).max() / scale
        if tail < tol:
            keep = np.nonzero(np.abs(c) / scale > 1e-16)[0]
            deg = keep[-1] if len(keep) else 0
            # retain two sub-1e-16 trailing coefficients so the stored series
            # itself witnesses the decay certificate
            out = np.zeros(min(deg + 3, n + 1), dtype=complex)
            out[: len(c[: deg + 3])] = c[: deg + 3]
            return out
        n *= 2
    raise SelfIntersection("parametrisation did not resolve to spectral accuracy")


class AnalyticArc:
    """A closed analytic arc gamma:[0,1] -> C in Chebyshev representation."""

    def __init__(self, coeffs, orientation=1):
        self.coeffs = np.asarray(coeffs, dtype=complex)
        self.orientation = orientation
        self._cheb = Chebyshev(self.coeffs, domain=[0.0, 1.0])
        self._dcheb = self._cheb.deriv()
        self._d2cheb = self._dcheb.deriv()

    # -- constructors -------------------------------------------------
    @classmethod
    def from_function(cls, fn, orientation=1, max_degree=1024):
        return cls(_cheb_fit(fn, max_degree=max_degree), orientation)

    @classmethod
    def circular(cls, center, radius, theta0, theta1):
        center = complex(center)

        def fn(t):
            return center + radius * np.exp(1j * (theta0 + (theta1 - theta0) * t))

        return cls.from_function(fn)

    @classmethod
    def segment(cls, a, b):
        a, b = complex(a), complex(b)
        # gamma(t) = a + (b-a)t = (a+b)/2 + (b-a)/2 * T_1(2t-1)
        return cls(np.array([(a + b) / 2, (b - a) / 2], dtype=complex))

    # -- evaluation ----------------------------------------------------
    @property
    def dcoeffs(self):
        return self._dcheb.coef

    def point(self, t):
        return self._cheb(np.asarray(t, dtype=float))

    def derivative(self, t):
        return self._dcheb(np.asarray(t, dtype=float))

    def second_derivative(self, t):
        return self._d2cheb(np.asarray(t, dtype=float))

    @property
    def start(self):
        return complex(self.point(0.0))

    @property
    def end(self):
        return complex(self.point(1.0))

    @property
    def is_closed(self):
        return abs(self.start - self.end) < 1e-12 * max(1.0, self.scale)

    @property
    def scale(self):
        return float(np.abs(self.coeffs).sum())

    # -- transforms (exact in coefficient space) -----------------------
    def reversed(self):
        return AnalyticArc.from_function(lambda t: self.point(1.0 - t),
                                         orientation=-self.orientation)

    def rotated(self, center, angle):
        """Rigid rotation z -> center + e^{i angle}(z - center); exact."""
        rot = np.exp(1j * angle)
        coeffs = self.coeffs * rot
        coeffs[0] += center * (1.0 - rot)
        return AnalyticArc(coeffs, self.orientation)

    def subarc(self, t0, t1):
        """Restriction to [t0, t1], re-expanded on [0,1]; exact for polynomials."""
        if not (0.0 <= t0 < t1 <= 1.0):
            raise ValueError("subarc range must satisfy 0 <= t0 < t1 <= 1")
        return AnalyticArc.from_function(lambda s: self.point(t0 + (t1 - t0) * s),
                                         orientation=self.orientation)

    # -- measurements ---------------------------------------------------
    def arclength(self, t0=0.0, t1=1.0, order=64):
        x, w = _leggauss(order)
        t = (t0 + t1) / 2 + (t1 - t0) / 2 * x
        return float(np.sum(np.abs(self.derivative(t)) * w) * (t1 - t0) / 2)

    def tail_ratio(self):
        scale = np.abs(self.coeffs).max()
        if len(self.coeffs) < 3 or scale == 0:
            return 0.0
        return float(np.abs(self.coeffs[-2:]).max() / scale)

    def min_speed(self, n=2048):
        t = np.linspace(0.0, 1.0, n)
        return float(np.abs(self.derivative(t)).min())

    def injectivity_margin(self, n=256):
        """min over grid pairs of |gamma(ti)-gamma(tj)| / d(ti,tj).

        Parameter distance is cyclic for closed arcs so the seam does not
        register as a self-intersection.
        """
        t = np.linspace(0.0, 1.0, n, endpoint=not self.is_closed)
        z = self.point(t)
        dz = np.abs(z[:, None] - z[None, :])
        dt = np.abs(t[:, None] - t[None, :])
        if self.is_closed:
            dt = np.minimum(dt, 1.0 - dt)
        iu = np.triu_indices(len(t), k=1)
        ratio = dz[iu] / dt[iu]
        return float(ratio.min())

    def validate(self):
        if self.min_speed() <= 0.0:
            raise SelfIntersection("gamma' vanishes on the parameter grid")
        if self.tail_ratio() > TAIL_TOL:
            raise SelfIntersection("coefficient tail above the analyticity certificate threshold")
        if self.injectivity_margin() <= 1e-10 * max(1.0, self.scale):
            raise SelfIntersection("arc fails the grid injectivity check")
        return self


@dataclass(frozen=True)
class Sector:
    """Open circular sector with vertex, radius and angle interval (a0 < a1)."""

    vertex: complex
    radius: float
    a0: float
    a1: float

    def contains(self, z, margin=0.0):
        z = np.asarray(z, dtype=complex)
        d = z - self.vertex
        r = np.abs(d)
        ang = np.angle(d)
        # compare angles modulo 2 pi relative to a0
        rel = np.mod(ang - self.a0, 2 * np.pi)
        width = self.a1 - self.a0
        ok_r = (r > margin) & (r < self.radius - margin)
        ok_a = (rel > margin) & (rel < width - margin)
        return ok_r & ok_a


@dataclass(frozen=True)
class CornerData:
    """Corner z_k between J_k and J_{k+1}: disk V_k, sectors, rotation R_k."""

    z: complex
    radius: float
    sectors: tuple            # (S_k(z), S_{k+1}(z))
    theta: float = 0.0        # rotation angle of R_k, set by build_rotation
    eps: float = 0.0          # containment radius for condition (d)
    index: int = -1

    def rotate(self, pts):
        return self.z + np.exp(1j * self.theta) * (np.asarray(pts, dtype=complex) - self.z)

    def rotate_arc(self, arc):
        return arc.rotated(self.z, self.theta)


class JordanBoundary:
    """Positively oriented piecewise-analytic Jordan curve."""

    def __init__(self, arcs, corner_angles):
        self.arcs = tuple(arcs)
        self.corner_angles = tuple(corner_angles)
        self._lengths = np.array([a.arclength() for a in self.arcs])
        self._cum = np.concatenate([[0.0], np.cumsum(self._lengths)])
        # spectral arclength s(t) per arc for partition bookkeeping
        self._sfuns = []
        for a in self.arcs:
            speed = _cheb_fit(lambda t, a=a: np.abs(a.derivative(t)) + 0j)
            integ = Chebyshev(speed.real, domain=[0.0, 1.0]).integ(lbnd=0.0)
            self._sfuns.append(integ)

    @property
    def n_arcs(self):
        return len(self.arcs)

    @property
    def total_length(self):
        return float(self._cum[-1])

    def junction_point(self, j):
        """Common endpoint of arc j and arc j+1 (mod n)."""
        return self.arcs[j].end

    def is_smooth_junction(self, j):
        return abs(self.corner_angles[j] - np.pi) < SMOOTH_JUNCTION_TOL

    def arclength_at(self, arc_idx, t):
        s = self._sfuns[arc_idx](np.asarray(t, dtype=float))
        return self._cum[arc_idx] + s

    def sample(self, n_per_arc=512, endpoint=False):
        ts = np.linspace(0.0, 1.0, n_per_arc, endpoint=endpoint)
        return np.concatenate([a.point(ts) for a in self.arcs])

    def distance_to(self, z, n_per_arc=1024):
        pts = self.sample(n_per_arc)
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        d = np.abs(z[:, None] - pts[None, :]).min(axis=1)
        return d if d.size > 1 else float(d[0])


def _interior_angle(arc_in, arc_out):
    """Interior angle at the junction, for a positively oriented boundary."""
    tin = arc_in.derivative(1.0)
    tout = arc_out.derivative(0.0)
    turn = np.angle(tout / tin)
    return float(np.pi - turn)


def build_boundary(arcs):
    """Chain arcs into a validated positively oriented Jordan boundary."""
    if not arcs:
        raise ChainBroken("no arcs given")
    arcs = [a.validate() for a in arcs]
    scale = max(a.scale for a in arcs)
    if len(arcs) == 1:
        if not arcs[0].is_closed:
            raise ChainBroken("single arc does not close")
        angles = ()
    else:
        for j, a in enumerate(arcs):
            b = arcs[(j + 1) % len(arcs)]
            if abs(a.end - b.start) > 1e-12 * max(1.0, scale):
                raise ChainBroken(f"arc {j} end does not meet arc {(j + 1) % len(arcs)} start")
        angles = tuple(_interior_angle(arcs[j], arcs[(j + 1) % len(arcs)])
                       for j in range(len(arcs)))
        for j, ang in enumerate(angles):
            if not (0.0 < ang <= np.pi + SMOOTH_JUNCTION_TOL):
                raise AngleOutOfRange(f"corner {j}: interior angle {ang:.6f} not in (0, pi]")
    boundary = JordanBoundary(arcs, angles)
    _check_simple(boundary)
    if _tangent_winding(boundary) < 0:
        raise OrientationError("boundary is negatively oriented")
    return boundary


def _tangent_winding(boundary):
    """Total winding of gamma' over the boundary, in turns (+1 expected).

    Turns at junctions enter through the principal angle, which is the right
    branch because interior angles are restricted to (0, pi].
    """
    total = 0.0
    prev_dir = None
    first_dir = None
    for a in boundary.arcs:
        t = np.linspace(0.0, 1.0, 512)
        d = a.derivative(t)
        ang = np.unwrap(np.angle(d))
        total += ang[-1] - ang[0]
        if prev_dir is None:
            first_dir = d[0]
        else:
            total += np.angle(d[0] / prev_dir)
        prev_dir = d[-1]
    total += np.angle(first_dir / prev_dir)
    return total / (2 * np.pi)


def _check_simple(boundary, n=192):
    """Grid check that distinct arcs do not cross and arcs are simple."""
    ts = np.linspace(0.0, 1.0, n)
    pts = [a.point(ts) for a in boundary.arcs]
    scale = max(a.scale for a in boundary.arcs)
    tol = 1e-9 * max(1.0, scale)
    m = len(boundary.arcs)
    for i in range(m):
        for j in range(i + 1, m):
            d = np.abs(pts[i][:, None] - pts[j][None, :])
            adjacent = (j == i + 1) or (i == 0 and j == m - 1)
            if adjacent:
                # ignore a neighbourhood of the shared endpoint(s)
                shared = []
                if j == i + 1:
                    shared.append(boundary.arcs[i].end)
                if i == 0 and j == m - 1:
                    shared.append(boundary.arcs[j].end)
                mask = np.ones_like(d, dtype=bool)
                for p in shared:
                    di = np.abs(pts[i] - p)
                    dj = np.abs(pts[j] - p)
                    li = boundary.arcs[i].arclength() * 0.2
                    mask &= ~(di[:, None] < li) | ~(dj[None, :] < li)
                if mask.any() and d[mask].min() < tol:
                    raise SelfIntersection(f"arcs {i} and {j} intersect away from their junction")
            else:
                if d.min() < tol:
                    raise SelfIntersection(f"arcs {i} and {j} intersect")


def winding_number(boundary, z, order=24):
    """(2 pi i)^-1 contour integral of dzeta/(zeta - z), rounded to an integer."""
    z = complex(z)
    if boundary.distance_to(z) <= 1e-12:
        raise TooCloseToBoundary("target within 1e-12 of the boundary")
    x, w = _leggauss(order)
    total = 0.0 + 0.0j

    def panel(arc, t0, t1, depth):
        nonlocal total
        t = (t0 + t1) / 2 + (t1 - t0) / 2 * x
        zeta = arc.point(t)
        dz = arc.derivative(t) * (t1 - t0) / 2
        dmin = np.abs(zeta - z).min()
        plen = np.sum(np.abs(dz * w))
        if dmin >= plen or depth >= 40:
            total += np.sum(dz * w / (zeta - z))
        else:
            tm = (t0 + t1) / 2
            panel(arc, t0, tm, depth + 1)
            panel(arc, tm, t1, depth + 1)

    for arc in boundary.arcs:
        for p in range(4):
            panel(arc, p / 4, (p + 1) / 4, 0)
    return int(np.rint((total / (2j * np.pi)).real))


# ----------------------------------------------------------------------
# Analytic maps
# ----------------------------------------------------------------------

class AnalyticMap:
    """Closed-form analytic map with first and second derivative evaluators."""

    def __init__(self, f, df, d2f, validity="", expr=None):
        self.f = f
        self.df = df
        self.d2f = d2f
        self.validity = validity
        self.expr = expr

    @classmethod
    def from_expr(cls, expr, validity=""):
        from .expressions import parse_expr

        if isinstance(expr, str):
            expr = parse_expr(expr)
        d1 = expr.diff("z")
        d2 = d1.diff("z")

        def evaluator(e):
            def call(z):
                out = np.asarray(e.eval(z=z), dtype=complex)
                if out.shape != np.shape(z):
                    out = np.broadcast_to(out, np.shape(z)).copy()
                return out if out.shape else complex(out)
            return call

        return cls(evaluator(expr), evaluator(d1), evaluator(d2),
                   validity=validity, expr=expr)

    @classmethod
    def identity(cls):
        from .expressions import Var

        return cls.from_expr(Var("z"), validity="entire")

    @classmethod
    def mobius(cls, a, b, c, d, validity=""):
        from .expressions import mobius as _mob

        return cls.from_expr(_mob(a, b, c, d), validity=validity)

    def __call__(self, z):
        return self.f(z)

    def derivative_check(self, points, h=1e-3, rtol=1e-8):
        """Central finite differences vs the stored derivative evaluators.

        Fourth-order stencils with h = 1e-3 keep both truncation and rounding
        near 1e-11 so the 1e-8 relative gate is meaningful.
        """
        pts = np.asarray(points, dtype=complex)
        fp2, fp1 = self.f(pts + 2 * h), self.f(pts + h)
        fm1, fm2 = self.f(pts - h), self.f(pts - 2 * h)
        f0 = self.f(pts)
        fd1 = (-fp2 + 8 * fp1 - 8 * fm1 + fm2) / (12 * h)
        fd2 = (-fp2 + 16 * fp1 - 30 * f0 + 16 * fm1 - fm2) / (12 * h**2)
        # guard the scale with |f| so identically-zero derivatives compare
        # in absolute terms against the function's own magnitude
        fscale = max(float(np.abs(f0).max()), 1e-30)
        s1 = max(float(np.abs(self.df(pts)).max()), fscale)
        s2 = max(float(np.abs(self.d2f(pts)).max()), fscale)
        e1 = np.abs(fd1 - self.df(pts)).max() / s1
        e2 = np.abs(fd2 - self.d2f(pts)).max() / s2
        return max(e1, e2) < rtol, float(max(e1, e2))


# ----------------------------------------------------------------------
# Admissible systems
# ----------------------------------------------------------------------

@dataclass
class AdmissibleSystem:
    boundary: JordanBoundary
    maps: list
    arc_assignment: list          # arc indices per J_k, consecutive and cyclic
    alpha: float
    corners: list = field(default_factory=list)   # CornerData, corner k between J_k and J_{k+1}
    continuation_margins: list = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        flat = [i for grp in self.arc_assignment for i in grp]
        if sorted(flat) != list(range(self.boundary.n_arcs)):
            raise ChainBroken("arc assignment must partition the boundary arcs")
        if not self.continuation_margins:
            self.continuation_margins = [0.1] * len(self.maps)

    @property
    def n(self):
        return len(self.maps)

    def J_arcs(self, k):
        return [self.boundary.arcs[i] for i in self.arc_assignment[k]]

    def J_start(self, k):
        return self.boundary.arcs[self.arc_assignment[k][0]].start

    def J_end(self, k):
        return self.boundary.arcs[self.arc_assignment[k][-1]].end

    def J_length(self, k):
        return sum(self.boundary._lengths[i] for i in self.arc_assignment[k])

    def corner_point(self, k):
        """Corner z_k = common endpoint of J_k and J_{k+1}."""
        return self.J_end(k)

    def sample_J(self, k, m=512, endpoint=False):
        ts = np.linspace(0.0, 1.0, m, endpoint=endpoint)
        return np.concatenate([a.point(ts) for a in self.J_arcs(k)])

    def outward_samples(self, k, m=256, offsets=(0.5,)):
        """Grid of Omega_k \\ closure(Omega): normal offsets across J_k."""
        out = []
        margin = self.continuation_margins[k]
        ts = np.linspace(0.02, 0.98, m)
        for a in self.J_arcs(k):
            z = a.point(ts)
            d = a.derivative(ts)
            nrm = -1j * d / np.abs(d)
            for frac in offsets:
                out.append(z + frac * margin * nrm)
        return np.concatenate(out)

    def interior_samples(self, m=2000, seed=0, min_boundary_dist=1e-3):
        """Random points of Omega via rejection sampling on the bounding box."""
        pts = self.boundary.sample(512)
        xlo, xhi = pts.real.min(), pts.real.max()
        ylo, yhi = pts.imag.min(), pts.imag.max()
        rng = np.random.default_rng(seed)
        acc = []
        got = 0
        while got < m:
            cand = (xlo + (xhi - xlo) * rng.random(4 * m)
                    + 1j * (ylo + (yhi - ylo) * rng.random(4 * m)))
            d = np.abs(cand[:, None] - pts[None, :]).min(axis=1)
            cand = cand[d > min_boundary_dist]
            keep = points_inside(cand, pts)
            acc.append(cand[keep])
            got += int(keep.sum())
        return np.concatenate(acc)[:m]


def points_inside(z, boundary_pts):
    """Vectorised point-in-domain test: discrete winding of sampled boundary."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    ang = np.angle(boundary_pts[None, :] - z[:, None])
    turns = np.diff(np.concatenate([ang, ang[:, :1]], axis=1), axis=1)
    turns = (turns + np.pi) % (2 * np.pi) - np.pi
    return np.abs(turns.sum(axis=1) / (2 * np.pi)) > 0.5


# ----------------------------------------------------------------------
# Corner splits (shared by partition, rotation and decomposition planning)
# ----------------------------------------------------------------------

def corner_split(system, k, radius=None):
    """Disk exit parameters of V_k on J_k (incoming) and J_{k+1} (outgoing).

    Returns (arc_in, t_in, arc_out, t_out): J_k^+ is arc_in restricted to
    [t_in, 1] and J_{k+1}^- is arc_out restricted to [0, t_out].
    """
    corner = system.corners[k]
    r = corner.radius if radius is None else radius
    zk = corner.z
    arc_in_idx = system.arc_assignment[k][-1]
    arc_out_idx = system.arc_assignment[(k + 1) % system.n][0]
    arc_in = system.boundary.arcs[arc_in_idx]
    arc_out = system.boundary.arcs[arc_out_idx]

    t_in = _disk_exit(arc_in, zk, r, from_end=True)
    t_out = _disk_exit(arc_out, zk, r, from_end=False)
    return arc_in_idx, t_in, arc_out_idx, t_out


def _disk_exit(arc, center, radius, from_end):
    """Parameter where |gamma(t) - center| = radius, nearest the given end."""
    ts = np.linspace(0.0, 1.0, 512)
    d = np.abs(arc.point(ts) - center) - radius
    if from_end:
        idx = np.nonzero(d[:-1] * d[1:] <= 0)[0]
        if len(idx) == 0:
            raise DisksOverlap("corner disk swallows the whole adjacent arc")
        i = idx[-1]
    else:
        idx = np.nonzero(d[:-1] * d[1:] <= 0)[0]
        if len(idx) == 0:
            raise DisksOverlap("corner disk swallows the whole adjacent arc")
        i = idx[0]
    lo, hi = ts[i], ts[i + 1]
    for _ in range(80):
        mid = (lo + hi) / 2
        if (abs(arc.point(lo) - center) - radius) * (abs(arc.point(mid) - center) - radius) <= 0:
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2


# ----------------------------------------------------------------------
# Partition of unity
# ----------------------------------------------------------------------

def _smoothstep7(u):
    """C^3 polynomial step: 0 -> 1 on [0,1] with three vanishing derivatives."""
    u = np.clip(u, 0.0, 1.0)
    return u**4 * (35.0 - 84.0 * u + 70.0 * u**2 - 20.0 * u**3)


@dataclass
class PartitionOfUnity:
    """eta_k plateau per J_k and nu_k bump per corner, in global arclength."""

    system: AdmissibleSystem
    windows: list     # per corner k: (s_corner, s_lo, s_hi) arclength window of V_k
    fraction: float
    radii: list = field(default_factory=list)

    def _nu_of_s(self, k, s):
        L = self.system.boundary.total_length
        sc, lo, hi = self.windows[k]
        s = np.mod(np.asarray(s, dtype=float) - sc + L / 2, L) - L / 2 + sc
        a = sc - lo          # inward half-width on the J_k side
        b = hi - sc          # on the J_{k+1} side
        up = _smoothstep7((s - (sc - a)) / (a / 2))          # rises on [sc-a, sc-a/2]
        down = 1.0 - _smoothstep7((s - (sc + b / 2)) / (b / 2))
        return np.where(s < sc, up, down) * ((s > sc - a) & (s < sc + b))

    def nu(self, k, arc_idx, t):
        return self._nu_of_s(k, _arclengths_v(self.system.boundary, arc_idx, t))

    def values_at(self, arc_idx, t):
        """(etas, nus) arrays at nodes given by parallel (arc_idx, t) arrays."""
        s = _arclengths_v(self.system.boundary, arc_idx, t)
        nus = np.stack([self._nu_of_s(k, s) for k in range(len(self.windows))]) \
            if self.windows else np.zeros((0, len(np.atleast_1d(s))))
        total = nus.sum(axis=0) if len(nus) else np.zeros_like(s)
        etas = []
        for k in range(self.system.n):
            mask = np.isin(arc_idx, self.system.arc_assignment[k])
            etas.append(np.where(mask, 1.0 - total, 0.0))
        return np.stack(etas), nus


def _arclengths_v(boundary, arc_idx, t):
    arc_idx = np.atleast_1d(np.asarray(arc_idx))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty_like(t)
    for i in np.unique(arc_idx):
        m = arc_idx == i
        out[m] = boundary.arclength_at(int(i), t[m])
    return out


def build_partition(system, corner_radius_fraction=0.25):
    """C^3 partition: plateau eta_k inside each J_k, bump nu_k in each V_k.

    The corner-disk radii are derived from the fraction (fraction times the
    shorter adjacent arc length); scenario builders construct CornerData with
    the same rule, and plan_decomposition cross-checks the two agree.
    """
    if not (0.0 < corner_radius_fraction <= 0.5):
        raise ValueError("corner_radius_fraction must lie in (0, 0.5]")
    if not system.corners:
        return PartitionOfUnity(system, [], corner_radius_fraction)
    boundary = system.boundary
    windows = []
    radii = []
    for k, corner in enumerate(system.corners):
        arc_in_l = boundary.arcs[system.arc_assignment[k][-1]].arclength()
        arc_out_l = boundary.arcs[system.arc_assignment[(k + 1) % system.n][0]].arclength()
        r = corner_radius_fraction * min(arc_in_l, arc_out_l)
        radii.append(r)
        arc_in, t_in, arc_out, t_out = corner_split(system, k, radius=r)
        s_in = float(boundary.arclength_at(arc_in, t_in))
        s_out = float(boundary.arclength_at(arc_out, t_out))
        sc = float(boundary.arclength_at(arc_in, 1.0))
        L = boundary.total_length
        if s_out < sc:
            s_out += L        # window wraps the seam
        windows.append((sc, s_in, s_out))
        # V_k must meet only its two adjacent arcs
        for i, arc in enumerate(boundary.arcs):
            if i in (arc_in, arc_out):
                continue
            ts = np.linspace(0, 1, 256)
            if np.abs(arc.point(ts) - corner.z).min() <= r:
                raise DisksOverlap(f"corner disk {k} meets non-adjacent arc {i}")
    # pairwise disk disjointness in the plane
    for k1 in range(len(system.corners)):
        for k2 in range(k1 + 1, len(system.corners)):
            gap = abs(system.corners[k1].z - system.corners[k2].z)
            if gap <= radii[k1] + radii[k2]:
                raise DisksOverlap(f"corner disks {k1} and {k2} intersect")
    # disjointness of windows along the boundary
    L = boundary.total_length
    order = sorted(range(len(windows)), key=lambda k: windows[k][0])
    for a in range(len(order)):
        k1, k2 = order[a], order[(a + 1) % len(order)]
        hi1 = windows[k1][2]
        lo2 = windows[k2][1] + (L if a + 1 == len(order) else 0.0)
        if hi1 >= lo2:
            raise DisksOverlap(f"corner windows {k1} and {k2} overlap on the boundary")
    part = PartitionOfUnity(system, windows, corner_radius_fraction, radii)
    _validate_partition(part)
    return part


def _validate_partition(part, n=2048):
    system = part.system
    boundary = system.boundary
    arc_idx = np.concatenate([np.full(n, i) for i in range(boundary.n_arcs)])
    t = np.concatenate([np.linspace(0, 1, n, endpoint=False)] * boundary.n_arcs)
    etas, nus = part.values_at(arc_idx, t)
    total = etas.sum(axis=0) + (nus.sum(axis=0) if len(nus) else 0.0)
    if np.abs(total - 1.0).max() > 1e-12:
        raise SupportLeak("partition does not sum to one on the boundary grid")
    if (etas < -1e-13).any() or (etas > 1 + 1e-13).any():
        raise SupportLeak("eta out of [0,1]")
    # eta_k must vanish where nu bumps have not fully decayed outside J_k
    for k in range(system.n):
        off = ~np.isin(arc_idx, system.arc_assignment[k])
        if (np.abs(etas[k][off]) > 1e-13).any():
            raise SupportLeak(f"eta_{k} leaks outside J_{k}")


# ----------------------------------------------------------------------
# Corner rotations
# ----------------------------------------------------------------------

class CornerLocale:
    """Cached near-corner boundary samples for outside tests and clearances.

    Valid within ~2 corner radii of the corner, where the boundary consists
    of the two adjacent arcs only (enforced by build_partition)."""

    def __init__(self, system, k, radius, n_local=1024):
        self.z = system.corner_point(k)
        arc_in_idx = system.arc_assignment[k][-1]
        arc_out_idx = system.arc_assignment[(k + 1) % system.n][0]
        self.pts = []
        self.nrm = []
        ts = np.linspace(0.0, 1.0, n_local)
        for idx in (arc_in_idx, arc_out_idx):
            arc = system.boundary.arcs[idx]
            z = arc.point(ts)
            keep = np.abs(z - self.z) < 2.5 * radius
            d = arc.derivative(ts[keep])
            self.pts.append(z[keep])
            self.nrm.append(-1j * d / np.abs(d))   # outward normal of a CCW boundary

    def outside_and_clearance(self, pts, block=4096):
        pts = np.asarray(pts, dtype=complex)
        outside = np.zeros(len(pts), dtype=bool)
        clearance = np.full(len(pts), np.inf)
        for z, nrm in zip(self.pts, self.nrm):
            for i0 in range(0, len(pts), block):
                p = pts[i0:i0 + block]
                dd = np.abs(p[:, None] - z[None, :])
                j = dd.argmin(axis=1)
                dist = dd[np.arange(len(p)), j]
                side = np.real((p - z[j]) * np.conj(nrm[j]))
                outside[i0:i0 + block] |= side > 0
                clearance[i0:i0 + block] = np.minimum(clearance[i0:i0 + block], dist)
        return outside, clearance


def _local_outside(system, k, pts):
    radius = system.corners[k].radius if system.corners else 0.1
    return CornerLocale(system, k, radius).outside_and_clearance(pts)


def build_rotation(system, k, n_scan=720, n_samples=256):
    """Rotation angle for corner k: first angle maximising the corner-relative
    clearance of R_k(J_k^+) from closure(Omega), subject to landing inside
    S_k ∩ S_{k+1}.  Clearance is dist(point, boundary)/dist(point, corner) so
    the sample nearest the corner does not dominate the objective."""
    corner = system.corners[k]
    arc_in_idx, t_in, _, _ = corner_split(system, k)
    arc_in = system.boundary.arcs[arc_in_idx]
    ts = np.linspace(t_in, 1.0, n_samples + 1)[:-1]   # exclude the corner point
    base = arc_in.point(ts)
    rad = np.abs(base - corner.z)
    s1, s2 = corner.sectors
    locale = CornerLocale(system, k, corner.radius, n_local=512)
    angles = 2 * np.pi * np.arange(n_scan) / n_scan
    best_angle, best_clear = None, -np.inf
    chunk = 48
    for c0 in range(0, n_scan, chunk):
        th = angles[c0:c0 + chunk]
        rot = corner.z + np.exp(1j * th)[:, None] * (base[None, :] - corner.z)
        in_sec = (s1.contains(rot.reshape(-1))
                  & s2.contains(rot.reshape(-1))).reshape(rot.shape)
        cand = np.nonzero(in_sec.all(axis=1))[0]
        if len(cand) == 0:
            continue
        flat = rot[cand].reshape(-1)
        outside, clear = locale.outside_and_clearance(flat)
        outside = outside.reshape(len(cand), -1)
        rel = (clear.reshape(len(cand), -1) / rad[None, :]).min(axis=1)
        for pos, i in enumerate(cand):
            if outside[pos].all() and rel[pos] > best_clear + 1e-15:
                best_clear = rel[pos]
                best_angle = th[i]
    if best_angle is None:
        raise NoValidRotation(f"no scanned rotation at corner {k} clears the domain")
    return replace(corner, theta=float(best_angle), index=k)


def attach_rotations(system):
    system.corners = [build_rotation(system, k) for k in range(len(system.corners))]
    return system


# ----------------------------------------------------------------------
# Default sectors (scenario helper; validated, never trusted blindly)
# ----------------------------------------------------------------------

def default_sectors(system, k, radius_factor=2.0, inward_margin=0.12, exterior_frac=0.85):
    """Sectors S_k, S_{k+1} at corner k: each hugs its arc and sweeps into the
    exterior wedge so that their intersection leaves room outside Omega."""
    corner_z = system.corner_point(k)
    arc_in = system.boundary.arcs[system.arc_assignment[k][-1]]
    arc_out = system.boundary.arcs[system.arc_assignment[(k + 1) % system.n][0]]
    r = radius_factor * (system.corners[k].radius if system.corners else
                         0.25 * min(arc_in.arclength(), arc_out.arclength()))
    a_in = float(np.angle(-arc_in.derivative(1.0)))    # direction along J_k away from corner
    a_out = float(np.angle(arc_out.derivative(0.0)))   # direction along J_{k+1} away from corner
    # interior angle spans from a_out to a_in through Omega; exterior is the rest
    interior = np.mod(a_in - a_out, 2 * np.pi)
    exterior = 2 * np.pi - interior
    sweep = exterior * exterior_frac
    # S_k: from just inside Omega at the J_k edge, sweeping across the exterior
    s_k = Sector(corner_z, r, a_in - inward_margin, a_in + sweep)
    s_k1 = Sector(corner_z, r, a_out - sweep, a_out + inward_margin)
    return s_k, s_k1


def _containment_eps(system, k, sectors):
    """Largest radius within which both adjacent arcs stay in their sectors."""
    s1, s2 = sectors
    eps = min(s1.radius, s2.radius)
    arc_in = system.boundary.arcs[system.arc_assignment[k][-1]]
    arc_out = system.boundary.arcs[system.arc_assignment[(k + 1) % system.n][0]]
    z = system.corner_point(k)
    ts = np.linspace(0.0, 1.0, 2048)
    for arc, sec in ((arc_in, s1), (arc_out, s2)):
        p = arc.point(ts)
        r = np.abs(p - z)
        near = (r < eps) & (r > 1e-12)
        bad = near & ~sec.contains(p)
        if bad.any():
            eps = min(eps, float(r[bad].min()))
    return 0.9 * eps


def make_corner(system, k, radius_fraction=0.25):
    arc_in = system.boundary.arcs[system.arc_assignment[k][-1]]
    arc_out = system.boundary.arcs[system.arc_assignment[(k + 1) % system.n][0]]
    radius = radius_fraction * min(arc_in.arclength(), arc_out.arclength())
    z = system.corner_point(k)
    temp = CornerData(z=z, radius=radius, sectors=(None, None), index=k)
    system.corners.append(temp)
    sectors = default_sectors(system, k)
    eps = _containment_eps(system, k, sectors)
    system.corners[-1] = replace(temp, sectors=sectors, eps=eps)
    return system.corners[-1]


# ----------------------------------------------------------------------
# Admissibility report
# ----------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass
class AdmissibilityReport:
    checks: list

    @property
    def all_passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self):
        return {c.name: {"passed": bool(c.passed), "margin": float(c.margin),
                         "detail": c.detail} for c in self.checks}


MARGIN_FLOOR = 1e-8


def validate_admissible(system, grid_density=256):
    """Run conditions (a)-(f) plus the |phi_k|>1-outside normalisation."""
    if grid_density < 64:
        raise ValueError("grid_density must be at least 64")
    checks = []
    n = system.n

    # (a) the J_k cover the boundary exactly: enforced structurally
    flat = [i for grp in system.arc_assignment for i in grp]
    ok_a = sorted(flat) == list(range(system.boundary.n_arcs))
    checks.append(CheckResult("a_cover", ok_a, np.inf if ok_a else 0.0,
                              "index ranges partition the arc list"))

    # (b) unimodularity on J_k
    worst_b = 0.0
    for k in range(n):
        z = system.sample_J(k, grid_density)
        worst_b = max(worst_b, float(np.abs(np.abs(system.maps[k](z)) - 1.0).max()))
    checks.append(CheckResult("b_unimodular", worst_b < 1e-10, 1e-10 - worst_b,
                              f"max | |phi_k| - 1 | on J_k grids = {worst_b:.3e}"))

    # (c) derivative evaluators consistent + Hoelder spot check of phi'
    ok_c, worst_fd = True, 0.0
    hoelder = []
    for k in range(n):
        pts = np.concatenate([system.sample_J(k, 64), system.outward_samples(k, 32)])
        good, err = system.maps[k].derivative_check(pts[:: max(1, len(pts) // 48)])
        ok_c &= good
        worst_fd = max(worst_fd, err)
        zz = system.sample_J(k, 128)
        dv = system.maps[k].df(zz)
        iu = np.triu_indices(len(zz), k=1)
        num = np.abs(dv[iu[0]] - dv[iu[1]])
        den = np.abs(zz[iu[0]] - zz[iu[1]]) ** system.alpha
        hoelder.append(float((num / den).max()))
    checks.append(CheckResult("c_holder_continuation", ok_c, max(hoelder),
                              f"fd-deviation {worst_fd:.2e}; est. C^alpha seminorms {hoelder}"))

    # (d) sectors contain the arcs near corners; exterior overlap nonempty;
    #     rotation containment
    ok_d, margin_d, det_d = True, np.inf, []
    for k, corner in enumerate(system.corners):
        s1, s2 = corner.sectors
        arc_in = system.boundary.arcs[system.arc_assignment[k][-1]]
        arc_out = system.boundary.arcs[system.arc_assignment[(k + 1) % n][0]]
        # containment of J_k and J_{k+1} within eps of the corner
        for arc, sec, at_end in ((arc_in, s1, True), (arc_out, s2, False)):
            ts = np.linspace(0, 1, 1024)
            z = arc.point(ts)
            near = (np.abs(z - corner.z) < corner.eps) & (np.abs(z - corner.z) > 1e-12)
            if near.any() and not sec.contains(z[near]).all():
                ok_d = False
                det_d.append(f"corner {k}: arc escapes its sector within eps")
        # exterior overlap: scan a polar grid inside S1 cap S2
        rr = np.linspace(0.05, 0.95, 24) * min(s1.radius, s2.radius)
        ang = np.linspace(0, 2 * np.pi, 144, endpoint=False)
        grid = (corner.z + np.outer(rr, np.exp(1j * ang))).ravel()
        both = s1.contains(grid) & s2.contains(grid)
        if both.any():
            outside, clear = _local_outside(system, k, grid[both])
            if outside.any():
                margin_d = min(margin_d, float(clear[outside].max()))
            else:
                ok_d = False
                det_d.append(f"corner {k}: sector overlap lies inside Omega")
        else:
            ok_d = False
            det_d.append(f"corner {k}: sectors do not overlap")
        # rotation containment on 256 samples
        if corner.theta != 0.0 or True:
            arc_in_idx, t_in, _, _ = corner_split(system, k)
            ts = np.linspace(t_in, 1.0, 257)[:-1]
            rot = corner.rotate(system.boundary.arcs[arc_in_idx].point(ts))
            in_sec = s1.contains(rot) & s2.contains(rot)
            outside, clear = _local_outside(system, k, rot)
            if not (in_sec.all() and outside.all()):
                ok_d = False
                det_d.append(f"corner {k}: rotated arc not contained in sectors minus Omega")
            else:
                margin_d = min(margin_d, float(clear.min()))
    if not system.corners:
        margin_d = np.inf
    checks.append(CheckResult("d_sectors_rotation", ok_d and margin_d > 1e-10,
                              margin_d, "; ".join(det_d) or "sectors, overlap and rotations verified"))

    # (e) derivative lower bound on J_k
    worst_e = np.inf
    for k in range(n):
        z = system.sample_J(k, grid_density)
        worst_e = min(worst_e, float(np.abs(system.maps[k].df(z)).min()))
    checks.append(CheckResult("e_derivative_bound", worst_e > MARGIN_FLOOR, worst_e,
                              f"min |phi_k'| over J_k grids = {worst_e:.6f}"))

    # (f) injectivity on J_k and image separation from the other arcs
    worst_inj, worst_sep = np.inf, np.inf
    arc_image_lengths = []
    for k in range(n):
        z = system.sample_J(k, grid_density)
        img = system.maps[k](z)
        iu = np.triu_indices(len(z), k=1)
        inj = np.abs(img[iu[0]] - img[iu[1]]) / np.abs(z[iu[0]] - z[iu[1]])
        worst_inj = min(worst_inj, float(inj.min()))
        ph = np.unwrap(np.angle(img))
        arc_image_lengths.append(float(abs(ph[-1] - ph[0])))
        others = np.concatenate([system.sample_J(l, grid_density // 2)
                                 for l in range(n) if l != k]) if n > 1 else None
        if others is not None:
            sep = np.abs(img[:, None] - system.maps[k](others)[None, :]).min()
            worst_sep = min(worst_sep, float(sep))
    margin_f = min(worst_inj, worst_sep)
    checks.append(CheckResult("f_injective_separated", margin_f > MARGIN_FLOOR, margin_f,
                              f"injectivity margin {worst_inj:.3e}; separation {worst_sep:.3e}; "
                              f"image arc lengths {arc_image_lengths}"))

    # normalisation: |phi_k| <= 1 on closure(Omega), > 1 on Omega_k \ closure(Omega)
    worst_in, worst_out = 0.0, np.inf
    interior = system.interior_samples(600)
    for k in range(n):
        vals_in = np.abs(system.maps[k](interior))
        worst_in = max(worst_in, float((vals_in - 1.0).max()))
        vals_out = np.abs(system.maps[k](system.outward_samples(k, 128)))
        worst_out = min(worst_out, float(vals_out.min()))
    ok_norm = worst_in < 1e-10 and worst_out > 1.0
    checks.append(CheckResult("norm_reflection", ok_norm, worst_out - 1.0,
                              f"max |phi| - 1 inside = {worst_in:.2e}; "
                              f"min |phi| outside = {worst_out:.6f}"))

    return AdmissibilityReport(checks)
