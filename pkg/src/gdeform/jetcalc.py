"""Truncated bivariate Taylor arithmetic and rank-aware subbundle estimation.

A :class:`Jet2` stores the Taylor coefficients of a germ in (u, v) at a base
point: ``c[a, b] = d_u^a d_v^b f / (a! b!)`` for ``a + b <= degree``.  The
coefficient array has shape ``(D+1, D+1, *rest)`` so a single jet can carry a
whole grid of base points and vector or matrix values at once; entries with
``a + b > D`` are kept at zero.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

MAX_DEGREE = 4
RANK_TOL = 1e-8


class JetDomainError(ArithmeticError):
    """Raised when an operation leaves the domain of its germ."""


def _mask(D):
    a = np.arange(D + 1)
    return (a[:, None] + a[None, :]) <= D


class Jet2:
    __slots__ = ("c", "degree")
    __array_ufunc__ = None

    def __init__(self, coeffs, degree):
        if not 0 <= degree <= MAX_DEGREE:
            raise ValueError(f"jet degree must lie in [0, {MAX_DEGREE}]")
        c = np.asarray(coeffs, dtype=float)
        if c.shape[:2] != (degree + 1, degree + 1):
            raise ValueError("coefficient array does not match the degree")
        self.c = c
        self.degree = degree

    # construction -------------------------------------------------------

    @classmethod
    def constant(cls, value, degree):
        value = np.asarray(value, dtype=float)
        c = np.zeros((degree + 1, degree + 1) + value.shape)
        c[0, 0] = value
        return cls(c, degree)

    @classmethod
    def variable(cls, which, value, degree):
        """Jet of the coordinate function u (which=0) or v (which=1)."""
        jet = cls.constant(value, degree)
        if degree >= 1:
            idx = (1, 0) if which == 0 else (0, 1)
            jet.c[idx] = 1.0
        return jet

    @classmethod
    def from_derivatives(cls, derivs, degree):
        """Build from a mapping (a, b) -> d_u^a d_v^b f."""
        first = np.asarray(next(iter(derivs.values())), dtype=float)
        c = np.zeros((degree + 1, degree + 1) + first.shape)
        for (a, b), val in derivs.items():
            if a + b <= degree:
                c[a, b] = np.asarray(val) / (math.factorial(a) * math.factorial(b))
        return cls(c, degree)

    # basic access -------------------------------------------------------

    @property
    def shape(self):
        return self.c.shape[2:]

    @property
    def value(self):
        return self.c[0, 0]

    def coeff(self, a, b):
        if a + b > self.degree:
            raise ValueError(f"order {a + b} exceeds jet degree {self.degree}")
        return self.c[a, b]

    def deriv(self, a, b):
        """d_u^a d_v^b of the germ at the base point."""
        return math.factorial(a) * math.factorial(b) * self.coeff(a, b)

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet2(self.c[(slice(None), slice(None)) + idx], self.degree)

    def apply(self, fn):
        """Apply a linear map acting on the trailing (non-jet) axes."""
        c = self.c
        out = fn(c.reshape((-1,) + c.shape[2:]))
        return Jet2(out.reshape(c.shape[:2] + out.shape[1:]), self.degree)

    def truncate(self, degree):
        if degree > self.degree:
            raise ValueError("cannot raise the degree of a jet")
        c = self.c[: degree + 1, : degree + 1].copy()
        c[~_mask(degree)] = 0.0
        return Jet2(c, degree)

    def d(self, axis):
        """Partial derivative along u (axis=0) or v (axis=1); degree drops by one."""
        D = self.degree
        if D == 0:
            raise ValueError("cannot differentiate a degree-0 jet")
        c = np.zeros((D, D) + self.shape)
        for a in range(D):
            for b in range(D - a):
                if axis == 0:
                    c[a, b] = (a + 1) * self.c[a + 1, b]
                else:
                    c[a, b] = (b + 1) * self.c[a, b + 1]
        return Jet2(c, D - 1)

    def directional(self, alpha, beta):
        """d_X of the germ for the (jet-valued) vector field X = alpha d_u + beta d_v."""
        du, dv = self.d(0), self.d(1)
        return _expand(alpha, du) * du + _expand(beta, dv) * dv

    def taylor_eval(self, du, dv):
        """Evaluate the truncated Taylor polynomial at offset (du, dv)."""
        out = 0.0
        for a in range(self.degree + 1):
            for b in range(self.degree + 1 - a):
                out = out + self.c[a, b] * (du**a) * (dv**b)
        return out

    def __repr__(self):
        return f"Jet2(degree={self.degree}, shape={self.shape})"

    # arithmetic ---------------------------------------------------------

    def _coerce(self, other):
        a = self
        b = other if isinstance(other, Jet2) else Jet2.constant(other, self.degree)
        if a.degree != b.degree:
            D = min(a.degree, b.degree)
            a, b = a.truncate(D), b.truncate(D)
        return _align_pair(a, b)

    def __add__(self, other):
        a, b = self._coerce(other)
        return Jet2(a.c + b.c, a.degree)

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self._coerce(other)
        return Jet2(a.c - b.c, a.degree)

    def __rsub__(self, other):
        a, b = self._coerce(other)
        return Jet2(b.c - a.c, a.degree)

    def __neg__(self):
        return Jet2(-self.c, self.degree)

    def __mul__(self, other):
        if not isinstance(other, Jet2):
            other = np.asarray(other, dtype=float)
            return Jet2(self.c * other, self.degree)
        a, b = self._coerce(other)
        return cauchy(a, b, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet2):
            other = np.asarray(other, dtype=float)
            if np.any(other == 0):
                raise JetDomainError("division by zero")
            return Jet2(self.c / other, self.degree)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)):
            return self.power(n)
        if n < 0:
            return (self ** (-n)).reciprocal()
        result = Jet2.constant(np.ones(self.shape), self.degree)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def __matmul__(self, other):
        return matmul(self, other)

    # elementary functions ----------------------------------------------

    def compose(self, derivs):
        """f(self) given derivs[k] = f^(k)(self.value) for k <= degree."""
        D = self.degree
        t = Jet2(self.c.copy(), D)
        t.c[0, 0] = 0.0
        out = Jet2.constant(derivs[D] / math.factorial(D), D)
        for k in range(D - 1, -1, -1):
            out = out * t + derivs[k] / math.factorial(k)
        return out

    def sin(self):
        x0 = self.value
        cycle = [np.sin(x0), np.cos(x0), -np.sin(x0), -np.cos(x0)]
        return self.compose([cycle[k % 4] for k in range(self.degree + 1)])

    def cos(self):
        x0 = self.value
        cycle = [np.cos(x0), -np.sin(x0), -np.cos(x0), np.sin(x0)]
        return self.compose([cycle[k % 4] for k in range(self.degree + 1)])

    def exp(self):
        e = np.exp(self.value)
        return self.compose([e] * (self.degree + 1))

    def reciprocal(self):
        x0 = self.value
        if np.any(x0 == 0):
            raise JetDomainError("division by a jet with zero constant term")
        return self.compose(
            [(-1) ** k * math.factorial(k) * x0 ** (-k - 1.0) for k in range(self.degree + 1)]
        )

    def power(self, p):
        """Real power; the constant term must be positive."""
        x0 = self.value
        if np.any(x0 <= 0):
            raise JetDomainError("real power of a jet needs a positive constant term")
        derivs = []
        coef = 1.0
        for k in range(self.degree + 1):
            derivs.append(coef * x0 ** (p - k))
            coef *= p - k
        return self.compose(derivs)

    def sqrt(self):
        if np.any(self.value <= 0):
            raise JetDomainError("square root of a jet needs a positive constant term")
        return self.power(0.5)


def _align_pair(a, b):
    """Right-align the trailing axes of two jets so their coefficients broadcast."""
    ra, rb = a.c.ndim, b.c.ndim
    if ra < rb:
        a = Jet2(a.c.reshape(a.c.shape[:2] + (1,) * (rb - ra) + a.c.shape[2:]), a.degree)
    elif rb < ra:
        b = Jet2(b.c.reshape(b.c.shape[:2] + (1,) * (ra - rb) + b.c.shape[2:]), b.degree)
    return a, b


def _expand(scalar, like):
    """Broadcast a scalar-valued jet (or array) against a jet with extra trailing axes."""
    if not isinstance(scalar, Jet2):
        return np.asarray(scalar)
    extra = len(like.shape) - len(scalar.shape)
    if extra <= 0:
        return scalar
    return Jet2(scalar.c.reshape(scalar.c.shape + (1,) * extra), scalar.degree)


def expand(scalar, like):
    return _expand(scalar, like)


def cauchy(x: Jet2, y: Jet2, op):
    """Truncated product of two jets under a bilinear map ``op`` of trailing axes."""
    if x.degree != y.degree:
        D = min(x.degree, y.degree)
        x, y = x.truncate(D), y.truncate(D)
    D = x.degree
    first = op(x.c[0, 0], y.c[0, 0])
    out = np.zeros((D + 1, D + 1) + np.shape(first))
    for a in range(D + 1):
        for b in range(D + 1 - a):
            acc = 0.0
            for i in range(a + 1):
                for j in range(b + 1):
                    acc = acc + op(x.c[i, j], y.c[a - i, b - j])
            out[a, b] = acc
    return Jet2(out, D)


def matmul(x, y):
    if not isinstance(x, Jet2):
        return Jet2(np.asarray(x) @ y.c, y.degree)
    if not isinstance(y, Jet2):
        return Jet2(x.c @ np.asarray(y), x.degree)
    return cauchy(x, y, np.matmul)


def matvec(M, v):
    """(Jet) matrix times (jet) vector over trailing axes."""
    op = lambda A, x: np.einsum("...ij,...j->...i", A, x)  # noqa: E731
    if not isinstance(M, Jet2):
        return Jet2(np.einsum("...ij,...j->...i", np.asarray(M), v.c), v.degree)
    if not isinstance(v, Jet2):
        return Jet2(np.einsum("...ij,...j->...i", M.c, np.asarray(v)), M.degree)
    return cauchy(M, v, op)


def dot(x: Jet2, y: Jet2, gram=None):
    """Bilinear pairing of two vector jets along the last axis."""
    if gram is None:
        op = lambda a, b: np.einsum("...i,...i->...", a, b)  # noqa: E731
    else:
        op = lambda a, b: np.einsum("...i,ij,...j->...", a, gram, b)  # noqa: E731
    return cauchy(x, y, op)


def outer(x: Jet2, y: Jet2):
    return cauchy(x, y, lambda a, b: a[..., :, None] * b[..., None, :])


def cross(x: Jet2, y: Jet2):
    return cauchy(x, y, lambda a, b: np.cross(a, b))


def stack(jets, axis=-1):
    D = min(j.degree for j in jets)
    jets = [j.truncate(D) if j.degree > D else j for j in jets]
    shapes = [j.shape for j in jets]
    target = np.broadcast_shapes(*shapes)
    cs = [np.broadcast_to(j.c, j.c.shape[:2] + target) for j in jets]
    ax = axis if axis < 0 else axis + 2
    return Jet2(np.stack(cs, axis=ax), D)


def inv(M: Jet2):
    """Inverse of a jet of square matrices (invertible constant term)."""
    M0 = M.value
    M0i = np.linalg.inv(M0)
    N = Jet2(M.c.copy(), M.degree)
    N.c[0, 0] = 0.0
    T = Jet2(-np.einsum("...ij,...jk->...ik", M0i, N.c), M.degree)
    out = Jet2.constant(M0i, M.degree)
    term = Jet2.constant(M0i, M.degree)
    for _ in range(M.degree):
        term = matmul(T, term)
        out = out + term
    return out


def iterated_derivative(jet: Jet2, J):
    """d_{X_J} of a jet for a multiset J of coordinate directions.

    J may be a string like ``"uuv"`` or a sequence of 0/1 axis labels.
    """
    a = sum(1 for x in J if x in ("u", 0))
    b = sum(1 for x in J if x in ("v", 1))
    if a + b != len(J):
        raise ValueError(f"unknown direction in {J!r}")
    if a + b > jet.degree:
        raise ValueError(f"|J| = {a + b} exceeds jet degree {jet.degree}")
    return jet.deriv(a, b)


def multisets(r):
    """Multisets of coordinate directions of size r, as (a, b) counts."""
    return [(r - k, k) for k in range(r + 1)]


# --------------------------------------------------------------------------
# subbundles


@dataclass
class SubbundleSample:
    point: tuple
    basis: np.ndarray
    rank: int
    tol: float
    label: str = "other"
    singular_values: np.ndarray = field(default=None, repr=False)
    near_degenerate: bool = False


@dataclass
class DirectionField:
    point: tuple
    direction: np.ndarray
    realness: str = "real"


def _rank(s, tol):
    smax = s[..., :1]
    safe = np.where(smax > 0, smax, 1.0)
    rel = s / safe
    rank = np.sum(rel > tol, axis=-1)
    near = np.any((rel > tol / 10) & (rel < tol * 10), axis=-1)
    return np.where(smax[..., 0] > 0, rank, 0), near


def derivative_vectors(jet: Jet2, order):
    """All d_J sigma with |J| <= order, stacked on axis -2: shape (..., K, N)."""
    if jet.degree < order:
        raise ValueError("jet degree is lower than the requested order")
    return np.stack([jet.deriv(a, b) for r in range(order + 1) for a, b in multisets(r)], axis=-2)


def span_with_derivatives(jet: Jet2, order: int, tol: float = RANK_TOL, point=(0.0, 0.0),
                          label="other", sections_axis=False) -> SubbundleSample:
    """Span of the sections and their derivatives up to ``order`` at one point.

    With ``sections_axis`` the jet has trailing shape (m, N): m spanning
    sections of a higher-rank bundle.
    """
    if jet.degree < order:
        raise ValueError("jet degree is lower than the requested order")
    vecs = []
    for r in range(order + 1):
        for a, b in multisets(r):
            d = jet.deriv(a, b)
            vecs.extend(np.atleast_2d(d) if sections_axis else [d])
    V = np.array(vecs)
    _, s, vt = np.linalg.svd(V, full_matrices=False)
    rank, near = _rank(s, tol)
    rank = int(rank)
    if near:
        warnings.warn(f"near-degenerate rank decision at {point}", RuntimeWarning, stacklevel=2)
    return SubbundleSample(tuple(point), vt[:rank], rank, tol, label, s, bool(near))


def span_rank(vectors, tol=RANK_TOL):
    """Batched numerical rank of stacks of vectors (..., K, N)."""
    s = np.linalg.svd(vectors, compute_uv=False)
    return _rank(s, tol)


def orthonormal_span(vectors, rank):
    """Orthonormal basis (rank, N) of the leading singular directions."""
    _, _, vt = np.linalg.svd(vectors, full_matrices=False)
    return vt[..., :rank, :]


# --------------------------------------------------------------------------
# asymptotic and curvature directions


def _quadratic_directions(A, B, C):
    """Roots (alpha : beta) of A a^2 + B a b + C b^2 = 0, as two direction pairs.

    Works on plain arrays or jets; uses the cancellation-free form
    q = -(B + sign(B) sqrt(disc)) / 2, roots (q : A) and (C : q).
    Returns ((a1, b1), (a2, b2)) unnormalised.
    """
    disc = B * B - 4.0 * A * C
    B0 = B.value if isinstance(B, Jet2) else B
    sgn = np.where(np.asarray(B0) >= 0, 1.0, -1.0)
    root = disc.sqrt() if isinstance(disc, Jet2) else np.sqrt(disc)
    q = -0.5 * (B + sgn * root)
    return (q, A), (C, q)


def _normalise_direction(a, b):
    if isinstance(a, Jet2):
        n = (a * a + b * b).sqrt()
        a, b = a / n, b / n
        a0, b0 = a.value, b.value
    else:
        n = np.sqrt(a * a + b * b)
        a, b = a / n, b / n
        a0, b0 = a, b
    flip = np.where(np.abs(a0) > 1e-14, np.sign(a0), np.sign(b0))
    flip = np.where(flip == 0, 1.0, flip)
    return a * flip, b * flip


def _order_pair(d1, d2):
    """Put the direction closer to d_u first (ties: larger second component first)."""
    a1 = np.abs(d1[0].value if isinstance(d1[0], Jet2) else d1[0])
    a2 = np.abs(d2[0].value if isinstance(d2[0], Jet2) else d2[0])
    b1 = d1[1].value if isinstance(d1[1], Jet2) else d1[1]
    b2 = d2[1].value if isinstance(d2[1], Jet2) else d2[1]
    swap = (a2 > a1 + 1e-12) | ((np.abs(a2 - a1) <= 1e-12) & (b2 > b1))
    return swap


def _select(swap, x, y):
    if isinstance(x, Jet2):
        s = swap.reshape(swap.shape + (1,) * (x.c.ndim - 2 - swap.ndim))
        return Jet2(np.where(s, y.c, x.c), x.degree), Jet2(np.where(s, x.c, y.c), x.degree)
    return np.where(swap, y, x), np.where(swap, x, y)


def asymptotic_coefficients(sigma: Jet2, tol=RANK_TOL):
    """Second fundamental form (L, M, N) of a projective surface at each point.

    sigma has trailing shape (..., 4).  pi(w) = <w, n> for the Euclidean unit
    normal n of F^(1); the asymptotic quadratic is L a^2 + 2M ab + N b^2.
    """
    F1 = np.stack([sigma.deriv(0, 0), sigma.deriv(1, 0), sigma.deriv(0, 1)], axis=-2)
    _, s, vt = np.linalg.svd(F1, full_matrices=True)
    n = vt[..., -1, :]
    L = np.einsum("...i,...i->...", sigma.deriv(2, 0), n)
    M = np.einsum("...i,...i->...", sigma.deriv(1, 1), n)
    N = np.einsum("...i,...i->...", sigma.deriv(0, 2), n)
    return L, M, N, s


class DegenerateError(ValueError):
    pass


def asymptotic_directions(sigma: Jet2, F1: SubbundleSample | None = None, point=(0.0, 0.0)):
    """Two asymptotic directions at a single point (sigma trailing shape (4,))."""
    if F1 is not None and F1.rank != 3:
        raise DegenerateError("F^(1) does not have rank 3")
    L, M, N, _ = asymptotic_coefficients(sigma)
    scale = max(abs(L), abs(M), abs(N))
    if scale < 1e-12 * (1 + np.linalg.norm(sigma.value)):
        raise DegenerateError("degenerate second fundamental form")
    L, M, N = L / scale, M / scale, N / scale
    disc = M * M - L * N
    if disc < 0:
        # complex conjugate pair, normalised in the Hermitian sense
        if abs(L) > 1e-14:
            t = (-M + 1j * np.sqrt(-disc)) / L
            d = np.array([t, 1.0])
        else:
            t = (-M + 1j * np.sqrt(-disc)) / N
            d = np.array([1.0, t])
        d = d / np.linalg.norm(d)
        return (DirectionField(tuple(point), d, "complex_pair"),
                DirectionField(tuple(point), d.conj(), "complex_pair"))
    (a1, b1), (a2, b2) = _quadratic_directions(L, 2 * M, N)
    if abs(disc) < 1e-14:
        raise DegenerateError("asymptotic directions coincide")
    d1 = _normalise_direction(np.float64(a1), np.float64(b1))
    d2 = _normalise_direction(np.float64(a2), np.float64(b2))
    if _order_pair(d1, d2):
        d1, d2 = d2, d1
    return (DirectionField(tuple(point), np.array(d1, dtype=float)),
            DirectionField(tuple(point), np.array(d2, dtype=float)))


@dataclass
class QuotientFrame:
    """Two sections of f^(1) whose classes span f^perp / f, chosen per point."""

    q: Jet2            # trailing shape (..., 2, N)
    gram_det: np.ndarray


def quotient_frame(a: Jet2, b: Jet2, gram) -> QuotientFrame:
    """Pick the best-conditioned pair among d_u a, d_v a, d_u b, d_v b."""
    cands = [a.d(0), a.d(1), b.d(0), b.d(1)]
    vals = np.stack([c.value for c in cands], axis=-2)
    H = np.einsum("...ki,ij,...lj->...kl", vals, gram, vals)
    pairs = [(0, 1), (2, 3), (0, 3), (1, 2), (0, 2), (1, 3)]
    dets = np.stack([H[..., i, i] * H[..., j, j] - H[..., i, j] ** 2 for i, j in pairs], axis=-1)
    best = np.argmax(np.abs(dets), axis=-1)
    C = np.stack([c.c for c in cands], axis=-2)  # (D+1, D+1, ..., 4, N)
    first = np.array([p[0] for p in pairs])[best]
    second = np.array([p[1] for p in pairs])[best]
    idx1 = np.broadcast_to(first[..., None, None], C.shape[:2] + first.shape + (1, C.shape[-1]))
    idx2 = np.broadcast_to(second[..., None, None], C.shape[:2] + second.shape + (1, C.shape[-1]))
    q = np.concatenate([np.take_along_axis(C, idx1, axis=-2), np.take_along_axis(C, idx2, axis=-2)], axis=-2)
    return QuotientFrame(Jet2(q, a.degree - 1), np.take_along_axis(dets, best[..., None], axis=-1)[..., 0])


@dataclass
class CurvatureSpheres:
    """Curvature sphere sections and curvature directions, as jets.

    sigma1/sigma2 have the trailing shape of the spanning sections; the
    directions are scalar jets (alpha, beta) of unit parameter-space norm.
    """

    sigma1: Jet2
    sigma2: Jet2
    T1: tuple
    T2: tuple
    conformal_coeffs: tuple
    discriminant: np.ndarray
    umbilic: np.ndarray
    signature_ok: np.ndarray

    def direction_fields(self, points):
        out = []
        for k, p in enumerate(np.atleast_2d(points)):
            out.append((DirectionField(tuple(p), np.array([self.T1[0].value[k], self.T1[1].value[k]])),
                        DirectionField(tuple(p), np.array([self.T2[0].value[k], self.T2[1].value[k]]))))
        return out


def _mask_jet(x: Jet2, bad, fill):
    c = x.c.copy()
    c[:, :, bad] = 0.0
    c[0, 0][bad] = fill
    return Jet2(c, x.degree)


def curvature_spheres(a: Jet2, b: Jet2, gram, umbilic_tol=1e-9, strict=True) -> CurvatureSpheres:
    """Curvature spheres of the Legendre map f = span(a, b) (batched, jet level).

    For T = alpha d_u + beta d_v the section x a + y b satisfies d_T(x a + y b)
    in f exactly when P(T) (x, y) = 0, where P(T)[k] pairs the derivative with
    a frame of f^perp / f.  det P(T) is the conformal structure on T Sigma; its
    real null directions are the curvature directions.
    """
    qf = quotient_frame(a, b, gram)
    D = a.degree - 1
    au, av, bu, bv = a.d(0), a.d(1), b.d(0), b.d(1)
    q = qf.q

    def pair(x):
        return cauchy(x, q, lambda s, Q: np.einsum("...i,ij,...kj->...k", s, gram, Q))

    Pu = stack([pair(au), pair(bu)], axis=-1)  # (..., 2 rows k, 2 cols)
    Pv = stack([pair(av), pair(bv)], axis=-1)

    def e(P, i, j):
        return P[..., i, j]

    A = e(Pu, 0, 0) * e(Pu, 1, 1) - e(Pu, 0, 1) * e(Pu, 1, 0)
    C = e(Pv, 0, 0) * e(Pv, 1, 1) - e(Pv, 0, 1) * e(Pv, 1, 0)
    B = (e(Pu, 0, 0) * e(Pv, 1, 1) + e(Pv, 0, 0) * e(Pu, 1, 1)
         - e(Pu, 0, 1) * e(Pv, 1, 0) - e(Pv, 0, 1) * e(Pu, 1, 0))
    A0, B0, C0 = A.value, B.value, C.value
    scale = np.maximum(np.maximum(np.abs(A0), np.abs(B0)), np.abs(C0))
    disc0 = B0 * B0 - 4 * A0 * C0
    umbilic = scale <= umbilic_tol * (1 + np.abs(qf.gram_det))
    signature_ok = (disc0 > 1e-12 * scale**2) & ~umbilic
    if not np.all(signature_ok):
        bad = np.flatnonzero(~np.atleast_1d(signature_ok))
        if strict:
            raise DegenerateError(
                f"curvature spheres not unique at {bad.size} point(s) "
                "(umbilic or conformal structure not of signature (1,1))"
            )
        # placeholder quadratic a*b = 0 at flagged points; callers mask them
        A, B, C = (_mask_jet(x, ~signature_ok, fill) for x, fill in ((A, 0.0), (B, 1.0), (C, 0.0)))
        scale = np.where(signature_ok, scale, 1.0)
    # normalise the quadratic to unit size before solving
    A, B, C = A / scale, B / scale, C / scale
    (a1, b1), (a2, b2) = _quadratic_directions(A, B, C)
    d1 = _normalise_direction(a1, b1)
    d2 = _normalise_direction(a2, b2)
    swap = _order_pair(d1, d2)
    T1a, T2a = _select(swap, d1[0], d2[0])
    T1b, T2b = _select(swap, d1[1], d2[1])
    T1, T2 = (T1a, T1b), (T2a, T2b)

    def null_section(T):
        al, be = T
        P = _expand(al, Pu) * Pu + _expand(be, Pv) * Pv  # (..., 2, 2)
        r0 = np.linalg.norm(P.value[..., 0, :], axis=-1)
        r1 = np.linalg.norm(P.value[..., 1, :], axis=-1)
        use1 = (r1 > r0)[..., None]
        row = Jet2(np.where(use1, P.c[..., 1, :], P.c[..., 0, :]), P.degree)
        x, y = row[..., 1], -row[..., 0]
        if not np.all(signature_ok):
            x, y = _mask_jet(x, ~signature_ok, 1.0), _mask_jet(y, ~signature_ok, 0.0)
        n = (x * x + y * y).sqrt()
        x, y = x / n, y / n
        sig = _expand(x, a) * a.truncate(D) + _expand(y, b) * b.truncate(D)
        return sig

    s1 = null_section(T1)
    s2 = null_section(T2)
    return CurvatureSpheres(s1, s2, T1, T2, (A0, B0, C0), disc0, umbilic, signature_ok)


def lie_cyclide_splitting(cs: CurvatureSpheres, gram=None):
    """Bases (..., 3, N) of S1 = <s1, d_Y s1, d_Y d_Y s1> and S2 likewise.

    Y runs along T2 for S1 and along T1 for S2 (second derivatives along the
    integral curves of the curvature direction fields).
    """
    def chain(s, T):
        al, be = T
        d1 = s.directional(al, be)
        d2 = d1.directional(al, be)
        return np.stack([s.value, d1.value, d2.value], axis=-2)

    if cs.sigma1.degree < 2:
        raise ValueError("lie cyclide splitting needs curvature sphere jets of degree >= 2")
    S1 = chain(cs.sigma1, cs.T2)
    S2 = chain(cs.sigma2, cs.T1)
    r1, _ = span_rank(S1)
    r2, _ = span_rank(S2)
    if np.any(r1 < 3) or np.any(r2 < 3):
        raise DegenerateError("splitting degenerate")
    return S1, S2
