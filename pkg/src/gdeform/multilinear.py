"""Linear algebra over (possibly indefinite) inner-product spaces.

Vectors live in R^n with a diagonal Gram matrix in the canonical basis.
Lie algebra elements are plain square matrices; :class:`AlgebraElement`
wraps one together with the invariant it must satisfy.  Second exterior
powers use the lexicographic basis ``e_i ^ e_j`` with ``i < j``.

All array functions accept arbitrary leading (batch) dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np

_REJECT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MetricSpace:
    """R^n, optionally carrying a non-degenerate symmetric bilinear form."""

    dimension: int
    signature: tuple[int, int] | None = None
    gram: np.ndarray | None = None

    def __post_init__(self):
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")
        if self.gram is None:
            if self.signature is not None:
                raise ValueError("a signature needs a gram matrix")
            return
        G = np.asarray(self.gram, dtype=float)
        if G.shape != (self.dimension, self.dimension):
            raise ValueError("gram has the wrong shape")
        if not np.allclose(G, G.T, atol=1e-12):
            raise ValueError("gram must be symmetric")
        ev = np.linalg.eigvalsh(G)
        sig = (int(np.sum(ev > 0)), int(np.sum(ev < 0)))
        if self.signature is not None and tuple(self.signature) != sig:
            raise ValueError(f"gram has signature {sig}, not {self.signature}")
        object.__setattr__(self, "gram", G)
        object.__setattr__(self, "signature", sig)

    @classmethod
    def canonical(cls, p: int, q: int) -> MetricSpace:
        """R^{p,q} with gram diag(+1 x p, -1 x q)."""
        return cls(p + q, (p, q), np.diag([1.0] * p + [-1.0] * q))

    @classmethod
    def plain(cls, n: int) -> MetricSpace:
        return cls(n)

    @property
    def has_metric(self) -> bool:
        return self.gram is not None

    def inner(self, x, y):
        if self.gram is None:
            raise ValueError("space carries no bilinear form")
        return np.einsum("...i,ij,...j->...", x, self.gram, y)

    def __repr__(self):
        if self.signature is None:
            return f"MetricSpace(R^{self.dimension})"
        return f"MetricSpace(R^{self.signature})"


SPECIAL_LINEAR = "special_linear"
ORTHOGONAL = "orthogonal"


def sl_residual(M):
    """|trace| of each matrix."""
    return np.abs(np.trace(M, axis1=-2, axis2=-1))


def o_residual(M, gram):
    """Frobenius norm of M^T G + G M (zero on the orthogonal algebra)."""
    R = np.swapaxes(M, -1, -2) @ gram + gram @ M
    return np.linalg.norm(R, axis=(-2, -1))


def sl_project(M):
    n = M.shape[-1]
    tr = np.trace(M, axis1=-2, axis2=-1)
    return M - tr[..., None, None] * np.eye(n) / n


def o_project(M, gram):
    """Skew-adjoint part of M w.r.t. a gram matrix with gram @ gram = I."""
    return 0.5 * (M - gram @ np.swapaxes(M, -1, -2) @ gram)


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    """An element of sl(n) or o(p,q), validated on construction."""

    ambient: MetricSpace
    matrix: np.ndarray
    algebra_kind: str = SPECIAL_LINEAR

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        n = self.ambient.dimension
        if M.shape != (n, n):
            raise ValueError(f"expected a {n}x{n} matrix, got {M.shape}")
        scale = 1.0 + np.linalg.norm(M)
        if self.algebra_kind == SPECIAL_LINEAR:
            if sl_residual(M) > _REJECT_TOL * scale:
                raise ValueError("matrix is not trace free")
        elif self.algebra_kind == ORTHOGONAL:
            if self.ambient.gram is None:
                raise ValueError("orthogonal algebra needs a metric")
            if o_residual(M, self.ambient.gram) > _REJECT_TOL * scale:
                raise ValueError("matrix is not skew-adjoint")
        else:
            raise ValueError(f"unknown algebra kind {self.algebra_kind!r}")
        object.__setattr__(self, "matrix", M)

    def __add__(self, other):
        _check_compatible(self, other)
        return AlgebraElement(self.ambient, self.matrix + other.matrix, self.algebra_kind)

    def __sub__(self, other):
        _check_compatible(self, other)
        return AlgebraElement(self.ambient, self.matrix - other.matrix, self.algebra_kind)

    def __mul__(self, t):
        return AlgebraElement(self.ambient, t * self.matrix, self.algebra_kind)

    __rmul__ = __mul__

    def __neg__(self):
        return AlgebraElement(self.ambient, -self.matrix, self.algebra_kind)


def _check_compatible(A, B):
    if A.ambient is not B.ambient and not (
        A.ambient.dimension == B.ambient.dimension
        and A.ambient.signature == B.ambient.signature
    ):
        raise ValueError("algebra elements live on different spaces")
    if A.algebra_kind != B.algebra_kind:
        raise ValueError("algebra elements are of different kinds")


def bracket(A, B):
    """Commutator AB - BA; accepts AlgebraElements or (batched) arrays."""
    if isinstance(A, AlgebraElement) or isinstance(B, AlgebraElement):
        if not (isinstance(A, AlgebraElement) and isinstance(B, AlgebraElement)):
            raise TypeError("cannot bracket an AlgebraElement with a raw array")
        _check_compatible(A, B)
        M = A.matrix @ B.matrix - B.matrix @ A.matrix
        return AlgebraElement(A.ambient, M, A.algebra_kind)
    A = np.asarray(A)
    B = np.asarray(B)
    return A @ B - B @ A


def _shape(size):
    return (size,) if isinstance(size, int) else tuple(size)


def random_sl(rng, n, size=()):
    return sl_project(rng.standard_normal(_shape(size) + (n, n)))


def random_o(rng, gram, size=()):
    n = gram.shape[0]
    return o_project(rng.standard_normal(_shape(size) + (n, n)), gram)


def exp_two_step_nilpotent(xi, tol=1e-12):
    """exp(xi) = id + xi for xi with xi^2 = 0."""
    M = xi.matrix if isinstance(xi, AlgebraElement) else np.asarray(xi, dtype=float)
    sq = np.linalg.norm(M @ M, axis=(-2, -1))
    if np.any(sq > tol * np.maximum(1.0, np.linalg.norm(M, axis=(-2, -1)) ** 2)):
        raise ValueError("not two-step nilpotent")
    return np.eye(M.shape[-1]) + M


# --------------------------------------------------------------------------
# second exterior power


def wedge_pairs(n):
    return list(combinations(range(n), 2))


@dataclass(frozen=True, eq=False)
class WedgeSpace:
    """The second exterior power of a base space."""

    base: MetricSpace
    basis_order: list = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "basis_order", wedge_pairs(self.base.dimension))

    @property
    def dimension(self) -> int:
        n = self.base.dimension
        return n * (n - 1) // 2

    @cached_property
    def induced_gram(self):
        """<v^w, x^y> = (v,x)(w,y) - (v,y)(w,x); None for a plain base."""
        G = self.base.gram
        if G is None:
            return None
        I = np.array([p[0] for p in self.basis_order])
        J = np.array([p[1] for p in self.basis_order])
        return G[I[:, None], I[None, :]] * G[J[:, None], J[None, :]] - (
            G[I[:, None], J[None, :]] * G[J[:, None], I[None, :]]
        )

    @cached_property
    def volume_gram(self):
        """Pairing v^w^x^y = <v^w, x^y> e1^e2^e3^e4 (dimension 4 only)."""
        if self.base.dimension != 4:
            raise ValueError("the volume pairing needs a 4-dimensional base")
        m = self.dimension
        V = np.zeros((m, m))
        eye = np.eye(4)
        for a, (i, j) in enumerate(self.basis_order):
            for b, (k, l) in enumerate(self.basis_order):
                V[a, b] = np.linalg.det(np.stack([eye[i], eye[j], eye[k], eye[l]]))
        return np.round(V)

    def metric_space(self, pairing="induced") -> MetricSpace:
        G = self.volume_gram if pairing == "volume" else self.induced_gram
        return MetricSpace(self.dimension, None, G) if G is not None else MetricSpace(self.dimension)


def wedge(v, w, ws: WedgeSpace | None = None):
    """Components v_i w_j - v_j w_i of v ^ w in lexicographic order."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if v.shape[-1] != w.shape[-1]:
        raise ValueError("dimension mismatch")
    n = v.shape[-1]
    if ws is not None and ws.base.dimension != n:
        raise ValueError("vectors do not live in the base of the wedge space")
    I, J = np.array(wedge_pairs(n)).T
    return v[..., I] * w[..., J] - v[..., J] * w[..., I]


def _induced_index(n):
    P = np.array(wedge_pairs(n))
    K, L = P[:, 0][:, None], P[:, 1][:, None]
    I, J = P[:, 0][None, :], P[:, 1][None, :]
    return K, L, I, J


def induced_action(A, ws: WedgeSpace | None = None, pairing="induced"):
    """Matrix of phi(A): v^w -> Av^w + v^Aw on the second exterior power.

    For raw (batched) arrays the matrix is returned as an array.  For an
    AlgebraElement the result is wrapped as an orthogonal element of the
    wedge space (volume pairing for sl(4), induced pairing otherwise).
    """
    if isinstance(A, AlgebraElement):
        ws = ws or WedgeSpace(A.ambient)
        M = induced_action(A.matrix)
        if A.algebra_kind == SPECIAL_LINEAR:
            if A.ambient.dimension != 4:
                raise ValueError("sl(n) lands in an orthogonal algebra only for n = 4")
            target = MetricSpace(6, None, ws.volume_gram)
        else:
            target = MetricSpace(ws.dimension, None, ws.induced_gram)
        return AlgebraElement(target, M, ORTHOGONAL)
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    if ws is not None and ws.base.dimension != n:
        raise ValueError("dimension mismatch")
    K, L, I, J = _induced_index(n)
    return (
        A[..., K, I] * (L == J)
        - A[..., L, I] * (K == J)
        + (K == I) * A[..., L, J]
        - (L == I) * A[..., K, J]
    )


def wedge_square_group(g):
    """Matrix of v^w -> gv^gw (second compound of g), batched."""
    g = np.asarray(g, dtype=float)
    K, L, I, J = _induced_index(g.shape[-1])
    return g[..., K, I] * g[..., L, J] - g[..., K, J] * g[..., L, I]


def wedge_endomorphism(a, b, gram):
    """Skew endomorphism x -> (a,x) b - (b,x) a identifying a^b with o(V)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    Ga = a @ gram
    Gb = b @ gram
    return b[..., :, None] * Ga[..., None, :] - a[..., :, None] * Gb[..., None, :]


def _plucker_basis():
    s = 1 / np.sqrt(2)
    # pairs order: 12 13 14 23 24 34
    B = np.array(
        [
            [s, 0, 0, 0, 0, s],
            [0, s, 0, 0, -s, 0],
            [0, 0, s, s, 0, 0],
            [s, 0, 0, 0, 0, -s],
            [0, s, 0, 0, s, 0],
            [0, 0, s, -s, 0, 0],
        ]
    ).T
    return B


PLUCKER_TO_R33 = _plucker_basis().T
"""Orthogonal change of coordinates taking Pluecker coordinates of ^2 R^4
(volume pairing) to canonical R^{3,3} coordinates."""


def sl4_to_o33(A):
    """phi(A) written in the canonical basis of R^{3,3}."""
    return PLUCKER_TO_R33 @ induced_action(A) @ PLUCKER_TO_R33.T


def signature_of(G, tol=1e-10):
    ev = np.linalg.eigvalsh(G)
    scale = max(1.0, np.max(np.abs(ev)))
    return int(np.sum(ev > tol * scale)), int(np.sum(ev < -tol * scale))


def span_residual(M, basis, elem_ndim=2):
    """Least-squares distance of M from span(basis), batched.

    M has shape (*lead, *elem) and basis (*lead, k, *elem), where elem has
    ``elem_ndim`` axes.  Returns (residual norm, coefficients).
    """
    M = np.asarray(M, dtype=float)
    basis = np.asarray(basis, dtype=float)
    lead = M.shape[: M.ndim - elem_ndim]
    k = basis.shape[len(lead)]
    Bf = basis.reshape(lead + (k, -1))
    Mf = M.reshape(lead + (-1,))
    pinv = np.linalg.pinv(np.swapaxes(Bf, -1, -2))
    coef = np.einsum("...ke,...e->...k", pinv, Mf)
    resid = Mf - np.einsum("...ke,...k->...e", Bf, coef)
    return np.linalg.norm(resid, axis=-1), coef


def subspace_distance(A, B):
    """sin of the largest principal angle between column spans of A and B.

    Spans of different dimension are compared one-sidedly: the distance of
    the smaller span from the larger.
    """
    from scipy.linalg import subspace_angles

    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    return float(np.sin(np.max(subspace_angles(A, B))))
