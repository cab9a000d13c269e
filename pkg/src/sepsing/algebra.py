"""Finite-dimensional commutative algebra laboratory.

Verifies the glued-subalgebra results by exact linear algebra: characters as
common left eigenvectors of the regular representation, glued subalgebras as
nullspaces of character-difference constraints, lying-over and fiber
dichotomy by enumeration, interpolation elements by the constructive product,
and derivation decomposition by the g_j^2 recipe.

Everything is complex floating point with 1e-10 verification gates; dims
stay at 12 or below so conditioning is benign.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CharactersCollide,
    FiberResolutionFailure,
    NotDistinct,
    NumericalDegeneracy,
    ScenarioFormatError,
)

VERIFY_TOL = 1e-10
MERGE_TOL = 1e-8


class FiniteCommAlgebra:
    """Unital commutative algebra given by structure constants.

    struct[i, j, k] is the e_k coefficient of e_i * e_j.
    """

    def __init__(self, struct, unit, labels=None):
        self.struct = np.asarray(struct, dtype=complex)
        self.unit = np.asarray(unit, dtype=complex)
        self.labels = labels or [f"e{i}" for i in range(self.dim)]
        self._verify()

    @property
    def dim(self):
        return self.struct.shape[0]

    def _verify(self):
        d = self.dim
        if self.struct.shape != (d, d, d) or len(self.unit) != d:
            raise ScenarioFormatError("structure constant tensor has wrong shape")
        if d > 12:
            raise ScenarioFormatError("algebra dimension capped at 12")
        if np.abs(self.struct - self.struct.transpose(1, 0, 2)).max() > 1e-12:
            raise ScenarioFormatError("structure constants are not commutative")
        # associativity on all basis triples
        lhs = np.einsum("ijm,mkl->ijkl", self.struct, self.struct)
        rhs = np.einsum("jkm,iml->ijkl", self.struct, self.struct)
        if np.abs(lhs - rhs).max() > 1e-12:
            raise ScenarioFormatError("structure constants are not associative")
        for i in range(d):
            ei = np.zeros(d)
            ei[i] = 1.0
            if np.abs(self.mul(self.unit, ei) - ei).max() > 1e-12:
                raise ScenarioFormatError("unit does not act as identity")

    def mul(self, a, b):
        return np.einsum("i,j,ijk->k", np.asarray(a, dtype=complex),
                         np.asarray(b, dtype=complex), self.struct)

    def mult_operator(self, a):
        """Matrix of multiplication by a in the basis."""
        return np.einsum("i,ijk->kj", np.asarray(a, dtype=complex), self.struct)

    def power(self, a, n):
        out = self.unit.copy()
        for _ in range(n):
            out = self.mul(out, a)
        return out

    # -- constructors ---------------------------------------------------
    @classmethod
    def quotient_ring(cls, poly_coeffs, var="x"):
        """C[x]/(p(x)) for monic p given by full coefficient list (low->high)."""
        p = np.asarray(poly_coeffs, dtype=complex)
        if abs(p[-1] - 1.0) > 1e-14:
            raise ScenarioFormatError("polynomial must be monic")
        d = len(p) - 1
        # companion multiplication: basis 1, x, ..., x^{d-1}
        struct = np.zeros((d, d, d), dtype=complex)
        # x^m mod p for m = 0..2d-2
        powers = []
        cur = np.zeros(d, dtype=complex)
        cur[0] = 1.0
        for m in range(2 * d - 1):
            powers.append(cur.copy())
            nxt = np.roll(cur, 1)
            spill = cur[-1]
            nxt[0] = 0.0
            nxt -= spill * p[:-1]
            cur = nxt
        for i in range(d):
            for j in range(d):
                struct[i, j] = powers[i + j]
        unit = np.zeros(d, dtype=complex)
        unit[0] = 1.0
        labels = ["1"] + [f"{var}^{m}" if m > 1 else var for m in range(1, d)]
        return cls(struct, unit, labels)

    @classmethod
    def scalars(cls):
        return cls.quotient_ring([-1.0, 1.0])   # C[x]/(x - 1) ~ C

    @classmethod
    def direct_sum(cls, *algebras):
        dims = [A.dim for A in algebras]
        d = sum(dims)
        struct = np.zeros((d, d, d), dtype=complex)
        unit = np.zeros(d, dtype=complex)
        labels = []
        off = 0
        for A, da in zip(algebras, dims):
            sl = slice(off, off + da)
            struct[sl, sl, sl] = A.struct
            unit[sl] = A.unit
            labels += [f"{lab}#{off}" for lab in A.labels]
            off += da
        return cls(struct, unit, labels)

    @classmethod
    def from_shorthand(cls, text):
        """Parse "C[x]/(x^3 - x)" or direct sums joined by '+'."""
        parts = [p.strip() for p in text.split("+")]
        algs = [cls._parse_quotient(p) for p in parts]
        return algs[0] if len(algs) == 1 else cls.direct_sum(*algs)

    @staticmethod
    def _parse_quotient(text):
        if text in ("C", "ℂ"):
            return FiniteCommAlgebra.scalars()
        m = re.fullmatch(r"C\[(\w+)\]/\((.+)\)", text.replace(" ", ""))
        if not m:
            raise ScenarioFormatError(f"cannot parse algebra shorthand {text!r}")
        var, poly = m.groups()
        coeffs = _parse_poly(poly, var)
        return FiniteCommAlgebra.quotient_ring(coeffs, var)


def _parse_poly(text, var):
    """Coefficients (low -> high) of a polynomial in `var` with ^ powers."""
    text = text.replace("-", "+-")
    terms = [t for t in text.split("+") if t]
    coeffs = {}
    for t in terms:
        m = re.fullmatch(rf"(-?\d*\.?\d*)\*?{var}(?:\^(\d+))?", t)
        if m:
            c = m.group(1)
            c = -1.0 if c == "-" else (1.0 if c in ("", "+") else float(c))
            p = int(m.group(2) or 1)
        else:
            c = float(t)
            p = 0
        coeffs[p] = coeffs.get(p, 0.0) + c
    deg = max(coeffs)
    return [coeffs.get(i, 0.0) for i in range(deg + 1)]


# ----------------------------------------------------------------------
# Characters
# ----------------------------------------------------------------------

@dataclass
class Character:
    algebra: FiniteCommAlgebra
    coeffs: np.ndarray      # psi(sum a_i e_i) = sum a_i coeffs[i]

    def __call__(self, a):
        return complex(np.dot(np.asarray(a, dtype=complex), self.coeffs))

    def multiplicativity_defect(self):
        A = self.algebra
        vals = np.einsum("ijk,k->ij", A.struct, self.coeffs)
        outer = np.outer(self.coeffs, self.coeffs)
        return float(np.abs(vals - outer).max())

    def close_to(self, other, tol=MERGE_TOL):
        return np.abs(self.coeffs - other.coeffs).max() < tol


def characters_of(A, seed=0, retries=5):
    """All unital characters, via left eigenvectors of a random element's
    multiplication operator, verified multiplicative and deduplicated."""
    rng = np.random.default_rng(seed)
    for attempt in range(retries):
        v = rng.standard_normal(A.dim) + 1j * rng.standard_normal(A.dim)
        M = A.mult_operator(v)
        _, vecs = np.linalg.eig(M.T)
        found = []
        for i in range(A.dim):
            psi = vecs[:, i]
            norm = np.dot(psi, A.unit)
            if abs(norm) < 1e-12:
                continue
            psi = psi / norm
            cand = Character(A, psi)
            if cand.multiplicativity_defect() < VERIFY_TOL:
                if not any(cand.close_to(c) for c in found):
                    found.append(cand)
        if found:
            return found
    raise NumericalDegeneracy("no verified characters after retries")


# ----------------------------------------------------------------------
# Glued subalgebras
# ----------------------------------------------------------------------

@dataclass
class GluedSubalgebra:
    parent: FiniteCommAlgebra
    pairs: list                     # (alpha_j, beta_j) Character pairs
    basis: np.ndarray               # columns span B inside the parent
    algebra: FiniteCommAlgebra      # B with its own structure constants

    @property
    def codim(self):
        return self.parent.dim - self.basis.shape[1]

    def glued_characters(self):
        out = []
        for a, b in self.pairs:
            out.append(a)
            out.append(b)
        merged = []
        for c in out:
            if not any(c.close_to(m) for m in merged):
                merged.append(c)
        return merged

    def to_parent(self, b_coeffs):
        return self.basis @ np.asarray(b_coeffs, dtype=complex)

    def restrict_functional(self, coeffs):
        """Restriction of a parent functional to B, in B coordinates."""
        return self.basis.T @ np.asarray(coeffs, dtype=complex)


def glue(A, pairs):
    """Subalgebra {f : alpha_j(f) = beta_j(f)} with verified closure."""
    for a, b in pairs:
        if a.close_to(b):
            raise NotDistinct("glued pair must consist of distinct characters")
    rows = np.array([a.coeffs - b.coeffs for a, b in pairs])
    # nullspace of the constraint rows
    _, s, Vh = np.linalg.svd(rows)
    rank = int(np.sum(s > 1e-12 * max(1.0, s.max())))
    basis = _orthonormal_with_unit(Vh[rank:].conj().T, A)
    Bdim = basis.shape[1]
    struct = np.zeros((Bdim, Bdim, Bdim), dtype=complex)
    pinv = np.linalg.pinv(basis)
    worst = 0.0
    for i in range(Bdim):
        for j in range(Bdim):
            prod = A.mul(basis[:, i], basis[:, j])
            coeffs = pinv @ prod
            worst = max(worst, float(np.abs(basis @ coeffs - prod).max()))
            struct[i, j] = coeffs
    if worst > VERIFY_TOL:
        raise NumericalDegeneracy("glued subspace is not multiplicatively closed")
    unit_b = pinv @ A.unit
    B = FiniteCommAlgebra(struct, unit_b)
    return GluedSubalgebra(A, list(pairs), basis, B)


def _orthonormal_with_unit(basis, A):
    """Orthonormalise the nullspace basis, keeping the unit in the span."""
    q, _ = np.linalg.qr(basis)
    return q


# ----------------------------------------------------------------------
# Lying over and fibers
# ----------------------------------------------------------------------

@dataclass
class LyingOverReport:
    surjective: bool
    fibers: list          # per character of B: list of parent character indices
    dichotomy: bool
    detail: str = ""


def lying_over_check(A, B, seed=0):
    """Verify i*: M(A) -> M(B) is onto and the glued-preimage dichotomy."""
    chars_A = characters_of(A, seed)
    chars_B = characters_of(B.algebra, seed)
    glued = B.glued_characters()
    fibers = []
    surjective = True
    dichotomy = True
    notes = []
    for cb in chars_B:
        fiber = []
        for idx, ca in enumerate(chars_A):
            restricted = B.restrict_functional(ca.coeffs)
            if np.abs(restricted - cb.coeffs).max() < MERGE_TOL:
                fiber.append(idx)
        if not fiber:
            surjective = False
            notes.append("character of B with empty fiber")
        fibers.append(fiber)
        in_glued = [any(chars_A[i].close_to(g) for g in glued) for i in fiber]
        if len(fiber) > 1:
            if not all(in_glued):
                dichotomy = False
                notes.append("multi-point fiber not contained in G(A,B)")
        elif len(fiber) == 1 and not in_glued[0]:
            pass    # singleton off G(A,B): allowed branch of the dichotomy
    return LyingOverReport(surjective, fibers, dichotomy, "; ".join(notes))


def interpolation_element(A, psi0, others):
    """f with psi0(f) = 1 and psi_j(f) = 0, by the constructive product of
    two-constraint minimum-norm solutions."""
    for psi in others:
        if psi0.close_to(psi):
            raise CharactersCollide("psi0 appears among the zero constraints")
    f = A.unit.copy()
    for psi in others:
        rows = np.vstack([psi0.coeffs, psi.coeffs])
        rhs = np.array([1.0, 0.0], dtype=complex)
        fj, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
        f = A.mul(f, fj / psi0(fj))
    return f


# ----------------------------------------------------------------------
# Derivations
# ----------------------------------------------------------------------

@dataclass
class DerivationAt:
    algebra: FiniteCommAlgebra
    base: Character
    coeffs: np.ndarray

    def __call__(self, a):
        return complex(np.dot(np.asarray(a, dtype=complex), self.coeffs))

    def leibniz_defect(self):
        A = self.algebra
        lhs = np.einsum("ijk,k->ij", A.struct, self.coeffs)
        psi = self.base.coeffs
        rhs = np.outer(self.coeffs, psi) + np.outer(psi, self.coeffs)
        return float(max(np.abs(lhs - rhs).max(), abs(self(A.unit))))


def derivations_at(A, psi):
    """Basis of the Leibniz nullspace at the character psi."""
    d = A.dim
    rows = []
    for i in range(d):
        for j in range(i, d):
            vec = A.struct[i, j].copy()
            vec[i] -= psi.coeffs[j]
            vec[j] -= psi.coeffs[i]
            rows.append(vec)
    rows.append(A.unit.copy())
    Mrows = np.array(rows)
    _, s, Vh = np.linalg.svd(Mrows)
    rank = int(np.sum(s > 1e-10 * max(1.0, s.max())))
    basis = Vh[rank:].conj()
    return [DerivationAt(A, psi, b) for b in basis]


def decompose_derivation(B, eta_B, seed=0):
    """Recover the unique parent derivations summing to eta_B on B.

    Constructive recipe: interpolation elements f_j at the fiber characters,
    g_j = 2 f_j - f_j^2, and eta_A^j(f) = eta_B(g_j^2 (f - psi_A^j(f) 1)).
    """
    A = B.parent
    chars_A = characters_of(A, seed)
    psi_B = eta_B.base
    fiber = [c for c in chars_A
             if np.abs(B.restrict_functional(c.coeffs) - psi_B.coeffs).max() < MERGE_TOL]
    if not fiber:
        raise FiberResolutionFailure("no parent characters restrict to the base")
    for c1, c2 in itertools.combinations(fiber, 2):
        if c1.close_to(c2, tol=1e-12):
            raise FiberResolutionFailure("fiber characters not numerically separated")
    glued = B.glued_characters()
    out = []
    for j, psi_j in enumerate(fiber):
        others = [c for i, c in enumerate(fiber) if i != j]
        others += [g for g in glued
                   if not any(g.close_to(c) for c in fiber)]
        f_j = interpolation_element(A, psi_j, others)
        g_j = 2.0 * f_j - A.mul(f_j, f_j)
        gj2 = A.mul(g_j, g_j)
        coeffs = np.zeros(A.dim, dtype=complex)
        for m in range(A.dim):
            em = np.zeros(A.dim)
            em[m] = 1.0
            arg = A.mul(gj2, em - psi_j(em) * A.unit)
            coeffs[m] = eta_B(_restrict_checked(B, arg))
        eta = DerivationAt(A, psi_j, coeffs)
        if eta.leibniz_defect() > VERIFY_TOL:
            raise FiberResolutionFailure("recovered functional fails the Leibniz gate")
        out.append(eta)
    return out


def _restrict_checked(B, parent_vec):
    """Coordinates of a parent element that lies in B."""
    coeffs = np.linalg.pinv(B.basis) @ np.asarray(parent_vec, dtype=complex)
    if np.abs(B.basis @ coeffs - parent_vec).max() > VERIFY_TOL:
        raise FiberResolutionFailure("argument is not an element of the subalgebra")
    return coeffs


def restrict_derivation_sum(B, etas):
    """(eta_1 + ... + eta_s)|B as a functional on B coordinates."""
    total = np.zeros(B.parent.dim, dtype=complex)
    for eta in etas:
        total += eta.coeffs
    return B.basis.T @ total


# ----------------------------------------------------------------------
# Test family enumeration
# ----------------------------------------------------------------------

def block_family(max_dim=6):
    """All direct sums of C, C[x]/(x^2), C[x]/(x^3) with dim <= max_dim."""
    blocks = {1: [-1.0, 1.0], 2: [0.0, 0.0, 1.0], 3: [0.0, 0.0, 0.0, 1.0]}
    out = []
    for total in range(1, max_dim + 1):
        for combo in _partitions(total, (1, 2, 3)):
            algs = [FiniteCommAlgebra.quotient_ring(blocks[b]) for b in combo]
            A = algs[0] if len(algs) == 1 else FiniteCommAlgebra.direct_sum(*algs)
            out.append((combo, A))
    return out


def _partitions(total, parts):
    if total == 0:
        yield ()
        return
    for p in parts:
        if p <= total:
            for rest in _partitions(total - p, tuple(q for q in parts if q <= p)):
                if not rest or p >= rest[0]:
                    yield (p,) + rest
