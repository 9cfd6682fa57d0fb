"""Deformability calculus for Lie-algebra-valued 1-forms on a surface.

Everything is evaluated at batches of parameter points ``(P, 2)``.  A form
is represented by a builder returning coefficient jets of trailing shape
``(P, 2, n, n)``: index 0 is the du-component, index 1 the dv-component.

A lifted surface ``ls`` (see :mod:`gdeform.geometries`) supplies

* ``ls.line_jet(points, degree)``: a section of the line that represents
  the surface, trailing shape ``(P, L)``,
* ``ls.rep(M)`` / ``ls.group_rep(g)``: how algebra and group elements act
  on the space containing that line,
* ``ls.complement_projector(points)``: projection onto a complement of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.linalg import expm, sqrtm

from . import jetcalc as jc
from .jetcalc import Jet2
from .multilinear import ORTHOGONAL, SPECIAL_LINEAR, o_residual, sl_residual

CHART_SKIP = 1e-3
DEFAULT_TOL = 1e-7


class CertificationError(ValueError):
    """A constructed form failed its post-hoc certification."""


# --------------------------------------------------------------------------
# forms


def _points(points):
    p = np.asarray(points, dtype=float)
    return p.reshape(1, 2) if p.shape == (2,) else p


class AlgValuedOneForm:
    """A 1-form with values in sl(n) or o(gram), given by coefficient jets."""

    def __init__(self, builder, dim, kind, gram=None, label="", provenance=None,
                 numeric=False, fd_step=1e-3):
        self.builder = builder
        self.dim = dim
        self.kind = kind
        self.gram = gram
        self.label = label
        self.provenance = provenance or {"source": label}
        self.numeric = numeric
        self.fd_step = fd_step

    def jets(self, points, degree=2) -> Jet2:
        points = _points(points)
        if self.numeric:
            return _fd_jet(self.builder, points, degree, self.fd_step)
        return self.builder(points, degree)

    def values(self, points):
        points = _points(points)
        if self.numeric:
            return np.asarray(self.builder(points), dtype=float)
        return self.builder(points, 0).value

    def algebra_residual(self, points):
        V = self.values(points)
        if self.kind == SPECIAL_LINEAR:
            return sl_residual(V).max(axis=-1)
        return o_residual(V, self.gram).max(axis=-1)

    def norm(self, points):
        """Pointwise Frobenius norm of (eta_u, eta_v)."""
        return np.linalg.norm(self.values(points).reshape(len(_points(points)), -1), axis=-1)

    def _derived(self, builder, label, provenance=None):
        return AlgValuedOneForm(builder, self.dim, self.kind, self.gram, label,
                                provenance or {"source": label}, self.numeric, self.fd_step)

    def scaled(self, t):
        if self.numeric:
            return self._derived(lambda p: t * np.asarray(self.builder(p)), f"{t}*{self.label}")
        return self._derived(lambda p, d: self.builder(p, d) * t, f"{t}*{self.label}",
                             {**self.provenance, "scale": t})

    def __add__(self, other):
        if self.numeric or other.numeric:
            return self._derived(lambda p: self.values(p) + other.values(p), f"{self.label}+{other.label}")
        return self._derived(lambda p, d: self.builder(p, d) + other.builder(p, d),
                             f"{self.label}+{other.label}",
                             {"source": "sum", "terms": [self.provenance, other.provenance]})

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    @classmethod
    def zero(cls, dim, kind, gram=None):
        def build(points, degree):
            return Jet2.constant(np.zeros((len(points), 2, dim, dim)), degree)
        return cls(build, dim, kind, gram, "zero", {"source": "zero"})

    @classmethod
    def constant(cls, Au, Av, kind, gram=None, label="constant"):
        Au = np.asarray(Au, dtype=float)
        Av = np.asarray(Av, dtype=float)

        def build(points, degree):
            V = np.broadcast_to(np.stack([Au, Av]), (len(points), 2) + Au.shape)
            return Jet2.constant(V, degree)
        return cls(build, Au.shape[-1], kind, gram, label)

    @classmethod
    def from_values(cls, fn, dim, kind, gram=None, label="numeric", fd_step=1e-3):
        """A form known only through values; derivatives come from central differences."""
        return cls(fn, dim, kind, gram, label, {"source": label}, numeric=True, fd_step=fd_step)


def _fd_jet(fn, points, degree, h):
    """Jet of degree <= 2 of a value function by central differences."""
    if degree > 2:
        raise ValueError("finite-difference jets are limited to degree 2")
    f = lambda du, dv: np.asarray(fn(points + np.array([du, dv])), dtype=float)  # noqa: E731
    f0 = f(0, 0)
    derivs = {(0, 0): f0}
    if degree >= 1:
        derivs[(1, 0)] = (f(h, 0) - f(-h, 0)) / (2 * h)
        derivs[(0, 1)] = (f(0, h) - f(0, -h)) / (2 * h)
    if degree >= 2:
        derivs[(2, 0)] = (f(h, 0) - 2 * f0 + f(-h, 0)) / h**2
        derivs[(0, 2)] = (f(0, h) - 2 * f0 + f(0, -h)) / h**2
        derivs[(1, 1)] = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h)
    return Jet2.from_derivatives(derivs, degree)


def random_smooth_field(rng, modes=3, amplitude=1.0, offset=True):
    """Seeded random trigonometric scalar field, returned as a jet builder."""
    k = rng.normal(size=(modes, 2))
    phase = rng.uniform(0, 2 * np.pi, size=modes)
    amp = amplitude * rng.normal(size=modes) / np.sqrt(modes)
    c0 = rng.normal() if offset else 0.0

    def build(points, degree):
        u = Jet2.variable(0, points[:, 0], degree)
        v = Jet2.variable(1, points[:, 1], degree)
        out = Jet2.constant(np.full(len(points), c0), degree)
        for m in range(modes):
            out = out + (u * k[m, 0] + v * k[m, 1] + phase[m]).sin() * amp[m]
        return out
    return build


def combine_basis(rng, basis_fn, dim, kind, gram=None, label="random", modes=3):
    """Random form sum_i (c_i du + c'_i dv) B_i over a jet basis (P, K, n, n)."""
    state = {}

    def fields(K):
        if "f" not in state:
            state["f"] = [[random_smooth_field(rng, modes) for _ in range(K)] for _ in range(2)]
        return state["f"]

    def build(points, degree):
        B = basis_fn(points, degree)  # (P, K, n, n)
        K = B.shape[1]
        fs = fields(K)
        comps = []
        for axis in range(2):
            acc = None
            for i in range(K):
                term = jc.expand(fs[axis][i](points, degree), B[:, i]) * B[:, i]
                acc = term if acc is None else acc + term
            comps.append(acc)
        return jc.stack(comps, axis=1)
    return AlgValuedOneForm(build, dim, kind, gram, label, {"source": label})


# --------------------------------------------------------------------------
# differential residuals


def closure_residual(form, points):
    """|d_u eta_v - d_v eta_u| pointwise."""
    J = form.jets(points, 1)
    d = J.d(0).value[:, 1] - J.d(1).value[:, 0]
    return np.linalg.norm(d.reshape(len(d), -1), axis=-1)


def maurer_cartan_residual(form, points):
    """|d_u eta_v - d_v eta_u + [eta_u, eta_v]| pointwise."""
    J = form.jets(points, 1)
    V = J.value
    d = J.d(0).value[:, 1] - J.d(1).value[:, 0] + V[:, 0] @ V[:, 1] - V[:, 1] @ V[:, 0]
    return np.linalg.norm(d.reshape(len(d), -1), axis=-1)


# --------------------------------------------------------------------------
# chart and invariant conditions


def covector_set(L, seed=42, n_random=8):
    """Canonical dual covectors followed by seeded random unit covectors."""
    rng = np.random.default_rng(seed)
    R = rng.normal(size=(n_random, L))
    R /= np.linalg.norm(R, axis=1, keepdims=True)
    return np.vstack([np.eye(L), R])


def _unit_line(ls, points, degree):
    line = ls.line_jet(points, degree)
    scale = np.linalg.norm(line.value, axis=-1)
    return line * (1.0 / scale)[:, None]


def _subset_terms(a, b):
    """Labelled subsets K of J = u^a v^b as (|K|_u, |K|_v) pairs, all 2^r of them."""
    labels = [0] * a + [1] * b
    out = []
    for bits in product((0, 1), repeat=len(labels)):
        ka = sum(1 for lab, s in zip(labels, bits) if s and lab == 0)
        kb = sum(1 for lab, s in zip(labels, bits) if s and lab == 1)
        out.append((ka, kb))
    return out


def chart_condition_residual(form, ls, points, r, v0_set=None, seed=42):
    """Residual of the order-r chart identity for each point and covector.

    Returns (residual (P, V), valid (P, V)).  The residual is relative to the
    a-priori size |eta(Y)| |d_K s| |d_(J-K) s| of the terms; invalid charts (|v0(sigma)| < 1e-3 for the
    unit section) are NaN.
    """
    points = _points(points)
    line = _unit_line(ls, points, r)
    L = line.shape[-1]
    v0_set = covector_set(L, seed) if v0_set is None else np.asarray(v0_set)
    E = ls.rep(form.values(points))  # (P, 2, L, L)
    P = len(points)
    out = np.full((P, len(v0_set)), np.nan)
    valid = np.zeros((P, len(v0_set)), dtype=bool)
    multis = jc.multisets(r)
    for i, v0 in enumerate(v0_set):
        s = line.apply(lambda c: c @ v0)
        ok = np.abs(s.value) >= CHART_SKIP
        valid[:, i] = ok
        if not np.any(ok):
            continue
        sc = s.c.copy()
        sc[0, 0][~ok] = 1.0
        hat = line / jc.expand(Jet2(sc, s.degree), line)
        derivs = {(a, b): hat.deriv(a, b) for q in range(r + 1) for a, b in jc.multisets(q)}
        norms = {key: np.linalg.norm(val, axis=-1) for key, val in derivs.items()}
        worst = np.zeros(P)
        for Y in (0, 1):
            EY = E[:, Y]
            enorm = np.linalg.norm(EY, axis=(-2, -1))
            for a, b in multis:
                lhs = np.einsum("pij,pj->pi", EY, derivs[(a, b)])
                rhs = np.zeros_like(lhs)
                # a-priori size of every term, so that exact cancellation stays relative
                size = enorm * norms[(a, b)]
                for ka, kb in _subset_terms(a, b):
                    w = np.einsum("pij,pj->pi", EY, derivs[(ka, kb)])
                    rhs += (w @ v0)[:, None] * derivs[(a - ka, b - kb)]
                    size = size + enorm * norms[(ka, kb)] * norms[(a - ka, b - kb)]
                res = np.linalg.norm(lhs - rhs, axis=-1) / (1.0 + size)
                worst = np.maximum(worst, res)
        out[:, i] = np.where(ok, worst, np.nan)
    return out, valid


def invariant_condition_residual(form, ls, points, r):
    """max over Y and |J| = r of |proj_complement((d_J eta(Y)) sigma)| for unit sigma."""
    points = _points(points)
    sig = ls.line_jet(points, 0).value
    sig = sig / np.linalg.norm(sig, axis=-1, keepdims=True)
    Pr = ls.complement_projector(points)
    J = form.jets(points, r)
    worst = np.zeros(len(points))
    for a, b in jc.multisets(r):
        D = ls.rep(J.deriv(a, b))  # (P, 2, L, L)
        for Y in (0, 1):
            w = np.einsum("pij,pj->pi", D[:, Y], sig)
            res = np.linalg.norm(np.einsum("pij,pj->pi", Pr, w), axis=-1)
            worst = np.maximum(worst, res)
    return worst


def order_residuals(form, ls, points, k, seed=42):
    """Invariant and chart residuals for every r < k, keyed by r."""
    inv, chart = {}, {}
    for r in range(k):
        inv[r] = invariant_condition_residual(form, ls, points, r)
        res, valid = chart_condition_residual(form, ls, points, r, seed=seed)
        chart[r] = (res, valid)
    return inv, chart


@dataclass
class EquivalenceAudit:
    orders: list
    invariant_pass: dict
    chart_pass: dict
    agreement: dict
    discrepancy_points: dict
    max_invariant: dict
    max_chart: dict
    tol: float

    @property
    def all_agree(self):
        return all(v == 1.0 for v in self.agreement.values())


def equivalence_audit(form, ls, points, r_max, tol=DEFAULT_TOL, seed=42):
    """Compare cumulative chart and invariant verdicts for orders 0..r_max.

    The chart verdict at a point passes when every valid sampled covector
    passes; both verdicts are cumulative over lower orders.
    """
    points = _points(points)
    inv_ok = np.ones(len(points), dtype=bool)
    chart_ok = np.ones(len(points), dtype=bool)
    audit = EquivalenceAudit([], {}, {}, {}, {}, {}, {}, tol)
    for r in range(r_max + 1):
        inv = invariant_condition_residual(form, ls, points, r)
        res, valid = chart_condition_residual(form, ls, points, r, seed=seed)
        inv_ok = inv_ok & (inv < tol)
        chart_ok = chart_ok & np.all(np.where(valid, res < tol, True), axis=1)
        audit.orders.append(r)
        audit.invariant_pass[r] = inv_ok.copy()
        audit.chart_pass[r] = chart_ok.copy()
        agree = inv_ok == chart_ok
        audit.agreement[r] = float(np.mean(agree))
        audit.discrepancy_points[r] = points[~agree].tolist()
        audit.max_invariant[r] = float(np.max(inv))
        audit.max_chart[r] = float(np.nanmax(res)) if np.any(valid) else float("nan")
    return audit


# --------------------------------------------------------------------------
# triviality


@dataclass
class TrivialityResult:
    trivial: bool
    method: str
    residual: float
    xi: np.ndarray | None = None
    coefficient: np.ndarray | None = None
    gradient_defect: float | None = None
    q_norm: float | None = None
    cross_check_agrees: bool | None = None
    details: dict = field(default_factory=dict)


def _solve_line_multiple(form, ls, points):
    """Least squares for eta = d(lambda xi0) with xi0 spanning the trivial bundle."""
    Z = ls.trivial_basis(points, 1)[:, 0]  # (P, n, n) jet of degree 1
    E = form.values(points)
    Z0, Zu, Zv = Z.value, Z.d(0).value, Z.d(1).value
    P, n = len(points), Z0.shape[-1]
    zero = np.zeros_like(Z0)
    # unknowns (lambda, lambda_u, lambda_v)
    cols = [np.concatenate([Zu, Zv], axis=1), np.concatenate([Z0, zero], axis=1),
            np.concatenate([zero, Z0], axis=1)]
    M = np.stack([c.reshape(P, -1) for c in cols], axis=-1)
    rhs = np.concatenate([E[:, 0], E[:, 1]], axis=1).reshape(P, -1)
    pinv = np.linalg.pinv(M)
    sol = np.einsum("pkm,pm->pk", pinv, rhs)
    resid = np.linalg.norm(rhs - np.einsum("pmk,pk->pm", M, sol), axis=-1)
    return sol, resid / (1.0 + np.linalg.norm(rhs, axis=-1)), Z0


def triviality_solve(form, ls, points, tol=1e-8, h=1e-4):
    """Decide whether eta is the derivative of a section of the trivial bundle.

    Projective and Lie sphere: pointwise least squares for (lambda, d lambda)
    plus a finite-difference consistency check on d lambda; the Lie sphere
    verdict is the vanishing of the quadratic differential, with the explicit
    reconstruction reported as a cross-check.  Conformal: trivial iff eta = 0.
    """
    points = _points(points)
    kind = ls.spec.kind
    if kind == "conformal":
        nrm = float(np.max(form.norm(points)))
        return TrivialityResult(nrm < 1e-10, "zero_form", nrm,
                                xi=np.zeros((len(points), form.dim, form.dim)) if nrm < 1e-10 else None)
    if ls.trivial_basis is None:
        raise ValueError(f"geometry {ls.spec.name} has no triviality solve")
    sol, resid, Z0 = _solve_line_multiple(form, ls, points)
    lam = sol[:, 0]
    grad_fd = []
    for axis in (0, 1):
        off = np.zeros(2)
        off[axis] = h
        lp = _solve_line_multiple(form, ls, points + off)[0][:, 0]
        lm = _solve_line_multiple(form, ls, points - off)[0][:, 0]
        grad_fd.append((lp - lm) / (2 * h))
    grad_fd = np.stack(grad_fd, axis=-1)
    gdef = float(np.max(np.abs(grad_fd - sol[:, 1:]) / (1.0 + np.abs(sol[:, 1:]))))
    lsq_ok = bool(np.max(resid) < tol and gdef < 1e-5)
    xi = lam[:, None, None] * Z0
    if kind == "projective_sl4":
        return TrivialityResult(lsq_ok, "least_squares", float(np.max(resid)),
                                xi if lsq_ok else None, lam, gdef)
    from .geometries import quadratic_differential  # deferred: geometries imports this module

    q = quadratic_differential(form, ls, points)
    qn = float(np.max(np.abs(q.values)))
    trivial = qn < tol
    return TrivialityResult(trivial, "quadratic_differential", float(np.max(resid)),
                            xi if trivial else None, lam, gdef, qn, trivial == lsq_ok)


# --------------------------------------------------------------------------
# gauge integration


_GAUSS = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)


def membership_residual(g, kind, gram=None):
    g = np.asarray(g)
    if kind == SPECIAL_LINEAR:
        return np.abs(np.linalg.det(g) - 1.0)
    return np.linalg.norm(np.swapaxes(g, -1, -2) @ gram @ g - gram, axis=(-2, -1))


def _reproject(g, kind, gram):
    if kind == SPECIAL_LINEAR:
        d = np.linalg.det(g)
        return g / np.abs(d)[..., None, None] ** (1.0 / g.shape[-1])
    out = np.empty_like(g)
    for idx in np.ndindex(g.shape[:-2]):
        S = gram @ g[idx].T @ gram @ g[idx]
        out[idx] = g[idx] @ np.linalg.inv(np.real(sqrtm(S)))
    return out


def path_increment(form, start, delta, substeps):
    """Fourth-order Magnus propagator of g' = g eta(delta) along straight segments.

    start (M, 2), delta (M, 2) or (2,); returns (M, n, n) with g(end) = g(start) @ result.
    """
    start = np.atleast_2d(start)
    delta = np.broadcast_to(np.asarray(delta, dtype=float), start.shape)
    M = len(start)
    dt = 1.0 / substeps
    ts = np.array([(j + c) * dt for j in range(substeps) for c in _GAUSS])
    pts = start[:, None, :] + ts[None, :, None] * delta[:, None, :]
    V = form.values(pts.reshape(-1, 2)).reshape(M, len(ts), 2, form.dim, form.dim)
    A = V[:, :, 0] * delta[:, None, 0, None, None] + V[:, :, 1] * delta[:, None, 1, None, None]
    out = np.broadcast_to(np.eye(form.dim), (M, form.dim, form.dim)).copy()
    c = math.sqrt(3) / 12
    for j in range(substeps):
        A1, A2 = A[:, 2 * j], A[:, 2 * j + 1]
        omega = 0.5 * dt * (A1 + A2) + c * dt * dt * (A1 @ A2 - A2 @ A1)
        out = out @ expm(omega)
    return out


@dataclass
class GaugeMap:
    us: np.ndarray
    vs: np.ndarray
    values: np.ndarray          # (nu, nv, n, n)
    base_index: tuple
    g0: np.ndarray
    path_defect: float
    membership: float
    reprojections: int
    form: AlgValuedOneForm = field(repr=False, default=None)

    def at(self, i, j):
        return self.values[i, j]


def _sweep(form, us, vs, base, g0, order, substeps, tol, counter):
    """Integrate over the grid: first along one axis through the base, then the other."""
    nu, nv = len(us), len(vs)
    n = form.dim
    G = np.zeros((nu, nv, n, n))
    i0, j0 = base
    G[i0, j0] = g0

    def advance(gs, starts, delta):
        inc = path_increment(form, starts, delta, substeps)
        out = gs @ inc
        drift = membership_residual(out, form.kind, form.gram)
        bad = drift > tol
        if np.any(bad):
            out[bad] = _reproject(out[bad], form.kind, form.gram)
            counter[0] += int(np.sum(bad))
        return out

    if order == "v_first":
        # base column (u = u0) along v
        for j in range(j0, nv - 1):
            G[i0, j + 1] = advance(G[i0, j][None], np.array([[us[i0], vs[j]]]), [0, vs[j + 1] - vs[j]])[0]
        for j in range(j0, 0, -1):
            G[i0, j - 1] = advance(G[i0, j][None], np.array([[us[i0], vs[j]]]), [0, vs[j - 1] - vs[j]])[0]
        for i in range(i0, nu - 1):
            starts = np.stack([np.full(nv, us[i]), vs], axis=-1)
            G[i + 1] = advance(G[i], starts, [us[i + 1] - us[i], 0])
        for i in range(i0, 0, -1):
            starts = np.stack([np.full(nv, us[i]), vs], axis=-1)
            G[i - 1] = advance(G[i], starts, [us[i - 1] - us[i], 0])
    else:
        for i in range(i0, nu - 1):
            G[i + 1, j0] = advance(G[i, j0][None], np.array([[us[i], vs[j0]]]), [us[i + 1] - us[i], 0])[0]
        for i in range(i0, 0, -1):
            G[i - 1, j0] = advance(G[i, j0][None], np.array([[us[i], vs[j0]]]), [us[i - 1] - us[i], 0])[0]
        for j in range(j0, nv - 1):
            starts = np.stack([us, np.full(nu, vs[j])], axis=-1)
            G[:, j + 1] = advance(G[:, j], starts, [0, vs[j + 1] - vs[j]])
        for j in range(j0, 0, -1):
            starts = np.stack([us, np.full(nu, vs[j])], axis=-1)
            G[:, j - 1] = advance(G[:, j], starts, [0, vs[j - 1] - vs[j]])
    return G


def integrate_gauge(form, grid, g0=None, base=(0, 0), substeps=4, tol=1e-8) -> GaugeMap:
    """Solve g^{-1} dg = eta on the grid nodes from g(base) = g0.

    Column-then-row and row-then-column integrations are both carried out;
    their maximal difference is the path-independence defect.
    """
    us, vs = grid.us, grid.vs
    g0 = np.eye(form.dim) if g0 is None else np.asarray(g0, dtype=float)
    counter = [0]
    G1 = _sweep(form, us, vs, base, g0, "v_first", substeps, tol, counter)
    G2 = _sweep(form, us, vs, base, g0, "u_first", substeps, tol, counter)
    defect = float(np.max(np.linalg.norm(G1 - G2, axis=(-2, -1))))
    memb = float(np.max(membership_residual(G1, form.kind, form.gram)))
    return GaugeMap(us, vs, G1, tuple(base), g0, defect, memb, counter[0], form)


def gauge_consistency(gmap: GaugeMap, points_idx=None, h=1e-4, substeps=4):
    """Max |g^{-1} dg - eta| at grid nodes, with dg from short Magnus steps."""
    form = gmap.form
    idx = points_idx or [(i, j) for i in range(1, len(gmap.us) - 1) for j in range(1, len(gmap.vs) - 1)]
    pts = np.array([[gmap.us[i], gmap.vs[j]] for i, j in idx])
    worst = 0.0
    E = form.values(pts)
    for axis in (0, 1):
        d = np.zeros(2)
        d[axis] = h
        plus = path_increment(form, pts, d, substeps)
        minus = path_increment(form, pts, -d, substeps)
        approx = (plus - minus) / (2 * h)  # g^{-1} dg at the node
        worst = max(worst, float(np.max(np.abs(approx - E[:, axis]))))
    return worst


# --------------------------------------------------------------------------
# contact order probe


@dataclass
class ProbeResult:
    point: tuple
    k: int
    steps: tuple
    defects: tuple
    ratio: float
    order_estimate: float
    target: float
    certified: bool
    covector: int


def contact_order_probe(ls, g, p, k, h=0.02, directions=8, substeps=8, rel_band=0.15):
    """Estimate the order of contact between g(p)^{-1} g F and F at p.

    ``g`` is a GaugeMap or a form; the relative gauge g(p)^{-1} g(q) is
    integrated along straight rays from p, so it does not depend on g0.
    defect(s) = max over ray directions of the chart distance between the two
    lines at q = p + s d; the ratio defect(h) / defect(h/2) is about 2^(k+1)
    when the contact order is exactly k.
    """
    form = g.form if isinstance(g, GaugeMap) else g
    p = np.asarray(p, dtype=float)
    line0 = ls.line_jet(p[None], 0).value[0]
    cov = int(np.argmax(np.abs(line0)))
    angles = 2 * np.pi * np.arange(directions) / directions
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    defects = []
    for s in (h, h / 2):
        starts = np.broadcast_to(p, dirs.shape)
        rel = path_increment(form, starts, s * dirs, substeps)
        q = p + s * dirs
        Lq = ls.line_jet(q, 0).value
        moved = np.einsum("pij,pj->pi", ls.group_rep(rel), Lq)
        a = moved / moved[:, cov:cov + 1]
        b = Lq / Lq[:, cov:cov + 1]
        defects.append(float(np.max(np.linalg.norm(a - b, axis=-1))))
    target = 2.0 ** (k + 1)
    if defects[0] < 1e-12:
        return ProbeResult(tuple(p), k, (h, h / 2), tuple(defects), float("inf"), float("inf"),
                           target, True, cov)
    ratio = defects[0] / max(defects[1], 1e-300)
    order = math.log2(ratio) - 1
    certified = abs(ratio - target) <= rel_band * target
    return ProbeResult(tuple(p), k, (h, h / 2), tuple(defects), ratio, order, target, certified, cov)


# --------------------------------------------------------------------------
# isothermic forms


def isothermic_form_builder(ls, certify_points=None, closure_tol=1e-8, containment_tol=1e-10):
    """Closed F^F-perp-valued form from the Christoffel dual of an isothermic surface.

    For a surface x in isothermic coordinates the dual satisfies
    x*_u = x_u/|x_u|^2, x*_v = -x_v/|x_v|^2.  The form is sigma ^ omega with
    omega = dx* + (x.dx*) inf, which is orthogonal to sigma.  The candidate
    is certified numerically on ``certify_points`` (closure and containment).
    """
    if ls.spec.kind != "conformal":
        raise ValueError("isothermic forms are built on conformal lifts")
    G = ls.spec.ambient.gram
    n = ls.spec.n

    def build(points, degree):
        x = ls.position_jet(points, degree + 1)
        xu, xv = x.d(0), x.d(1)
        x = x.truncate(degree)
        sig = ls.lift_position(x)
        comps = []
        for axis, (xd, sgn) in enumerate(((xu, 1.0), (xv, -1.0))):
            dstar = xd * jc.expand(jc.dot(xd, xd).reciprocal(), xd) * sgn
            w = jc.dot(x, dstar)
            zeros = Jet2.constant(np.zeros(w.shape), degree)
            omega = jc.stack([dstar[..., i] for i in range(n)] + [zeros - w, w], axis=-1)
            comps.append(wedge_endo_jet(sig, omega, G))
        return jc.stack(comps, axis=1)

    form = AlgValuedOneForm(build, n + 2, ORTHOGONAL, G, "isothermic",
                            {"source": "builtin_isothermic", "surface": str(ls.expr)})
    pts = certify_points if certify_points is not None else ls.interior_points()
    if pts is not None and len(pts):
        clo = float(np.max(closure_residual(form, pts)))
        cont = float(np.max(ls.admissible_residual(form, pts)))
        form.provenance.update({"closure": clo, "containment": cont})
        if not (clo < closure_tol and cont < containment_tol):
            raise CertificationError(
                f"candidate form rejected (closure {clo:.3e}, containment {cont:.3e})")
    return form


def wedge_endo_jet(a: Jet2, b: Jet2, gram):
    """Jet of the skew endomorphism x -> (a,x) b - (b,x) a."""
    Ga = a.apply(lambda c: c @ gram)
    Gb = b.apply(lambda c: c @ gram)
    return jc.outer(b, Ga) - jc.outer(a, Gb)
