"""Surfaces lifted into projective, conformal and Lie sphere geometry.

Each lift knows how to produce jets of its spanning sections at arbitrary
parameter points, the line representing it (the point itself, or the
Pluecker line a^b of a Legendre map), the bundle of admissible algebra
values and, where one exists, the bundle generating trivial deformations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from . import deform_core as dc
from . import jetcalc as jc
from .jetcalc import Jet2
from .multilinear import (
    ORTHOGONAL,
    SPECIAL_LINEAR,
    MetricSpace,
    induced_action,
    span_residual,
    subspace_distance,
    wedge,
    wedge_square_group,
)
from .surface_dsl import SurfaceExpr, eval_jet, resolve_surface, to_text

FLAG_FRACTION = 0.01
INF = np.array([0.0, 0.0, 0.0, -1.0, 1.0])


class GeometryError(ValueError):
    """The lifted surface violates an assumption of its geometry."""


# --------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class GeometrySpec:
    kind: str
    ambient: MetricSpace
    group_kind: str
    n: int = 3

    def __post_init__(self):
        sig = self.ambient.signature
        if self.kind == "conformal" and sig != (self.n + 1, 1):
            raise ValueError("conformal geometry needs signature (n+1, 1)")
        if self.kind == "lie_sphere" and sig not in ((3, 3), (4, 2)):
            raise ValueError("Lie sphere geometry needs signature (3,3) or (4,2)")
        if self.kind not in ("projective_sl4", "conformal", "lie_sphere"):
            raise ValueError(f"unknown geometry kind {self.kind!r}")

    @classmethod
    def projective(cls):
        return cls("projective_sl4", MetricSpace.plain(4), SPECIAL_LINEAR)

    @classmethod
    def conformal(cls, n=3):
        return cls("conformal", MetricSpace.canonical(n + 1, 1), ORTHOGONAL, n)

    @classmethod
    def lie_sphere(cls, s, t):
        return cls("lie_sphere", MetricSpace.canonical(s, t), ORTHOGONAL)

    @property
    def name(self):
        if self.kind == "lie_sphere":
            s, t = self.ambient.signature
            return f"lie_sphere_{s}{t}"
        return "projective" if self.kind == "projective_sl4" else "conformal"

    @property
    def gram(self):
        return self.ambient.gram


def spec_from_name(name):
    table = {
        "projective": GeometrySpec.projective,
        "conformal": GeometrySpec.conformal,
        "lie_sphere_33": lambda: GeometrySpec.lie_sphere(3, 3),
        "lie_sphere_42": lambda: GeometrySpec.lie_sphere(4, 2),
    }
    if name not in table:
        raise ValueError(f"unknown geometry {name!r}; expected one of {sorted(table)}")
    return table[name]()


# --------------------------------------------------------------------------
# jet helpers


_EPS4 = np.zeros((4, 4, 4, 4))
for _p in permutations(range(4)):
    _EPS4[_p] = np.linalg.det(np.eye(4)[list(_p)])


def annihilator_jet(s: Jet2, su: Jet2, sv: Jet2) -> Jet2:
    """Covector N_i = det(s, su, sv, e_i) killing span(s, su, sv)."""
    T = jc.cauchy(s, su, lambda a, b: a[..., :, None] * b[..., None, :])
    T = jc.cauchy(T, sv, lambda t, c: np.einsum("...jk,...l->...jkl", t, c))
    return T.apply(lambda t: np.einsum("ijkl,...jkl->...i", _EPS4, t))


def wedge_jet(a: Jet2, b: Jet2) -> Jet2:
    return jc.cauchy(a, b, lambda x, y: wedge(x, y))


def unit_normal_jet(x: Jet2) -> Jet2:
    n = jc.cross(x.d(0), x.d(1))
    return n * jc.expand(jc.dot(n, n).sqrt().reciprocal(), n)


def _scalar_jet(value, degree):
    return Jet2.constant(np.asarray(value, dtype=float), degree)


# --------------------------------------------------------------------------
# lifted surfaces


@dataclass
class QuadDiff:
    points: np.ndarray
    values: np.ndarray          # (P, 2, 2)

    @property
    def asymmetry(self):
        return float(np.max(np.abs(self.values - np.swapaxes(self.values, -1, -2)), initial=0.0))

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.values), initial=0.0))


class LiftedSurface:
    """Common interface; subclasses fix the lift and its bundles."""

    spec: GeometrySpec
    expr: SurfaceExpr | None
    grid = None
    trivial_basis = None

    def __init__(self, spec, expr=None, grid=None, label=""):
        self.spec = spec
        self.expr = expr
        self.grid = grid
        self.label = label or (to_text(expr) if expr is not None else spec.name)
        self.flags: dict[str, list] = {}
        self.checks: dict[str, float] = {}

    # interface -----------------------------------------------------------

    def sections(self, points, degree) -> Jet2:
        """Spanning sections, trailing shape (P, m, N)."""
        raise NotImplementedError

    @property
    def rank(self):
        return 1

    @property
    def dim(self):
        return self.spec.ambient.dimension

    def line_jet(self, points, degree):
        S = self.sections(dc._points(points), degree)
        return S[:, 0]

    def rep(self, M):
        return M

    def group_rep(self, g):
        return g

    def complement_projector(self, points):
        s = self.line_jet(points, 0).value
        s = s / np.linalg.norm(s, axis=-1, keepdims=True)
        return np.eye(s.shape[-1]) - s[..., :, None] * s[..., None, :]

    def admissible_basis(self, points, degree) -> Jet2:
        raise NotImplementedError

    # shared helpers ---------------------------------------------------------

    def interior_points(self):
        if self.grid is None:
            return None
        return self.grid.points()[self.grid.interior_mask()]

    def admissible_residual(self, form, points):
        """Relative distance of eta_u, eta_v from the admissible bundle, pointwise."""
        points = dc._points(points)
        B = self.admissible_basis(points, 0).value
        V = form.values(points)
        worst = np.zeros(len(points))
        for Y in (0, 1):
            res, _ = span_residual(V[:, Y], B)
            worst = np.maximum(worst, res / (1.0 + np.linalg.norm(V[:, Y], axis=(-2, -1))))
        return worst

    def random_admissible_form(self, rng, label="random_admissible", modes=3):
        return dc.combine_basis(rng, self.admissible_basis, self.dim, self.spec.group_kind,
                                self.spec.gram, label, modes)

    def random_trivial_form(self, rng, label="random_trivial", modes=3):
        """eta = d(lambda xi0) for a smooth random lambda and the trivial generator xi0."""
        if self.trivial_basis is None:
            raise ValueError(f"{self.spec.name} has no nonzero trivial forms")
        lam = dc.random_smooth_field(rng, modes)

        def build(points, degree):
            Z = self.trivial_basis(points, degree + 1)[:, 0]
            xi = jc.expand(lam(points, degree + 1), Z) * Z
            return jc.stack([xi.d(0), xi.d(1)], axis=1)
        return dc.AlgValuedOneForm(build, self.dim, self.spec.group_kind, self.spec.gram, label,
                                   {"source": label})

    def _flag(self, name, mask, points, interior=True):
        bad = points[mask]
        self.flags[name] = [tuple(map(float, p)) for p in bad]
        frac = float(np.mean(mask)) if len(mask) else 0.0
        if frac > FLAG_FRACTION:
            raise GeometryError(f"{name}: assumption violated at {frac:.1%} of interior points")
        return frac


# ----------------------------------------------------------------------------
# projective


class ProjectiveSurface(LiftedSurface):
    def __init__(self, expr, grid=None, label=""):
        super().__init__(GeometrySpec.projective(), expr, grid, label)
        self.trivial_basis = self._psi_basis

    def sections(self, points, degree):
        return self.point_jet(points, degree)[:, None]

    def point_jet(self, points, degree):
        x = eval_jet(self.expr, dc._points(points), degree)
        if x.shape[-1] == 3:
            one = Jet2.constant(np.ones(x.shape[:-1]), degree)
            x = jc.stack([one] + [x[..., i] for i in range(3)], axis=-1)
        return x

    def frame_values(self, points):
        """(P, 4, 4) columns sigma, sigma_u, sigma_v, sigma_uv."""
        s = self.point_jet(points, 2)
        return np.stack([s.deriv(0, 0), s.deriv(1, 0), s.deriv(0, 1), s.deriv(1, 1)], axis=-1)

    def complement_projector(self, points):
        # fixed complement spanned by sigma_u, sigma_v, sigma_uv
        E = self.frame_values(points)
        eps0 = np.linalg.inv(E)[:, 0, :]
        return np.eye(4) - E[:, :, 0, None] * eps0[:, None, :]

    def annihilator(self, points, degree):
        s = self.point_jet(points, degree + 1)
        return annihilator_jet(s.truncate(degree), s.d(0), s.d(1))

    def admissible_basis(self, points, degree):
        """Spanning set (rank 5) of {A : A F = 0, A F1 <= F, tr A = 0}."""
        s = self.point_jet(points, degree + 1)
        N = annihilator_jet(s.truncate(degree), s.d(0), s.d(1))
        s0 = s.truncate(degree)
        inv2 = jc.expand(jc.dot(s0, s0).reciprocal(), s0)
        mats = []
        for j in range(4):
            beta = Jet2.constant(np.eye(4)[j] * np.ones(s0.shape), degree) - s0 * (inv2 * s0[..., j:j + 1])
            mats.append(jc.outer(s0, beta))
        mats.append(jc.outer(s.d(0), N))
        mats.append(jc.outer(s.d(1), N))
        return jc.stack(mats, axis=1)

    def _psi_basis(self, points, degree):
        s = self.point_jet(points, degree + 1)
        N = annihilator_jet(s.truncate(degree), s.d(0), s.d(1))
        return jc.outer(s.truncate(degree), N)[:, None]

    def theta_dimension(self, points):
        B = self.admissible_basis(points, 0).value
        s = np.linalg.svd(B.reshape(B.shape[0], B.shape[1], -1), compute_uv=False)
        return jc._rank(s, jc.RANK_TOL)[0]

    def ranks(self, points):
        s = self.point_jet(points, 2)
        F1 = np.stack([s.deriv(0, 0), s.deriv(1, 0), s.deriv(0, 1)], axis=-2)
        F2 = np.concatenate([F1, np.stack([s.deriv(2, 0), s.deriv(1, 1), s.deriv(0, 2)], axis=-2)], axis=-2)
        return jc.span_rank(F1)[0], jc.span_rank(F2)[0]

    def asymptotic(self, points):
        """Asymptotic directions (P, 2, 2) and a realness mask (complex pairs get NaN)."""
        s = self.point_jet(points, 2)
        L, M, N, _ = jc.asymptotic_coefficients(s)
        scale = np.maximum(np.maximum(np.abs(L), np.abs(M)), np.abs(N))
        L, M, N = L / scale, M / scale, N / scale
        real = M * M - L * N > 0
        d = np.full((len(L), 2, 2), np.nan)
        if np.any(real):
            (a1, b1), (a2, b2) = jc._quadratic_directions(L[real], 2 * M[real], N[real])
            d1 = jc._normalise_direction(a1, b1)
            d2 = jc._normalise_direction(a2, b2)
            swap = jc._order_pair(d1, d2)
            first = np.stack(jc._select(swap, d1[0], d2[0]), axis=-1)
            second = np.stack(jc._select(swap, d1[1], d2[1]), axis=-1)
            d[real] = np.stack([first, second], axis=-1) + 0.0
        return d, real


def projective_lift(expr, grid=None, label=""):
    """Projective surface from a 4-component (or auto-homogenised 3-component) expression."""
    expr = resolve_surface(expr) if isinstance(expr, str) else expr
    if expr.arity not in (3, 4):
        raise GeometryError(f"projective surfaces need 3 or 4 components, got {expr.arity}")
    ls = ProjectiveSurface(expr, grid, label)
    pts = ls.interior_points()
    if pts is None:
        return ls
    s = ls.point_jet(pts, 0).value
    rel0 = np.abs(s[:, 0]) / np.linalg.norm(s, axis=-1)
    if np.any(rel0 < 1e-3):
        raise GeometryError("first homogeneous coordinate is not bounded away from zero")
    r1, r2 = ls.ranks(pts)
    ls._flag("F1_rank_not_3", r1 != 3, pts)
    ls._flag("F2_not_R4", r2 != 4, pts)
    d, real = ls.asymptotic(pts)
    ls.asymptotic_directions = d
    ls.asymptotic_real = real
    ls.checks["theta_dimension"] = int(np.max(ls.theta_dimension(pts)))
    return ls


# ----------------------------------------------------------------------------
# conformal


class ConformalSurface(LiftedSurface):
    def position_jet(self, points, degree):
        return eval_jet(self.expr, dc._points(points), degree)

    def lift_position(self, x: Jet2) -> Jet2:
        """sigma = (x, (1 - |x|^2)/2, (1 + |x|^2)/2)."""
        r2 = jc.dot(x, x)
        comps = [x[..., i] for i in range(x.shape[-1])]
        return jc.stack(comps + [(1.0 - r2) * 0.5, (1.0 + r2) * 0.5], axis=-1)

    def point_jet(self, points, degree):
        return self.lift_position(self.position_jet(points, degree))

    def sections(self, points, degree):
        return self.point_jet(points, degree)[:, None]

    def normal_section(self, points, degree):
        """n = nu + (x.nu) inf, a unit section of F1-perp / F."""
        x = self.position_jet(points, degree + 1)
        nu = unit_normal_jet(x)
        x = x.truncate(degree)
        w = jc.dot(x, nu)
        zero = Jet2.constant(np.zeros(w.shape), degree)
        return jc.stack([nu[..., i] for i in range(3)] + [zero - w, w], axis=-1)

    def admissible_basis(self, points, degree, refined=False):
        """sigma^sigma_u, sigma^sigma_v and (unless refined) sigma^n spanning F^F-perp."""
        if self.spec.n != 3:
            raise NotImplementedError("admissible bundles are built for surfaces in R^3")
        G = self.spec.gram
        s = self.point_jet(points, degree + 1)
        s0 = s.truncate(degree)
        mats = [dc.wedge_endo_jet(s0, s.d(0), G), dc.wedge_endo_jet(s0, s.d(1), G)]
        if not refined:
            mats.append(dc.wedge_endo_jet(s0, self.normal_section(points, degree), G))
        return jc.stack(mats, axis=1)

    def refinement_residual(self, form, points):
        """Size of the F^(F-perp / F1) component of eta (zero for closed admissible eta)."""
        B = self.admissible_basis(points, 0).value
        V = form.values(points)
        worst = np.zeros(len(points))
        for Y in (0, 1):
            _, coef = span_residual(V[:, Y], B)
            part = coef[:, 2:3, None, None] * B[:, 2:3]
            worst = np.maximum(worst, np.linalg.norm(part[:, 0], axis=(-2, -1)))
        return worst


def conformal_lift(expr, grid=None, n=3, label=""):
    expr = resolve_surface(expr) if isinstance(expr, str) else expr
    if expr.arity != n:
        raise GeometryError(f"conformal lift expects an immersion into R^{n}, got {expr.arity} components")
    ls = ConformalSurface(GeometrySpec.conformal(n), expr, grid, label)
    pts = ls.interior_points()
    if pts is None:
        return ls
    G = ls.spec.gram
    sj = ls.point_jet(pts, 3)
    ls.checks["null_lift"] = float(np.max(np.abs(jc.dot(sj, sj, G).c)))
    x = ls.position_jet(pts, 1)
    tang = np.stack([x.deriv(1, 0), x.deriv(0, 1)], axis=-2)
    ls._flag("not_immersed", jc.span_rank(tang)[0] != 2, pts)
    F1 = np.stack([sj.deriv(0, 0), sj.deriv(1, 0), sj.deriv(0, 1)], axis=-2)
    ls.checks["F1_rank"] = int(np.min(jc.span_rank(F1)[0]))
    pair = np.einsum("pki,ij,pj->pk", F1, G, sj.value)
    ls.checks["F1_in_F_perp"] = float(np.max(np.abs(pair)))
    return ls


# ----------------------------------------------------------------------------
# Lie sphere


class LegendreSurface(LiftedSurface):
    """Rank-2 null subbundle f = span(a, b) of R^{s,t}."""

    def __init__(self, spec, sections_fn, expr=None, grid=None, label=""):
        super().__init__(spec, expr, grid, label)
        self._sections_fn = sections_fn
        self.trivial_basis = self._wedge_f_basis
        self.dupin = None

    @property
    def rank(self):
        return 2

    def sections(self, points, degree):
        return self._sections_fn(dc._points(points), degree)

    def line_jet(self, points, degree):
        S = self.sections(points, degree)
        return wedge_jet(S[:, 0], S[:, 1])

    def rep(self, M):
        return induced_action(M)

    def group_rep(self, g):
        return wedge_square_group(g)

    def _wedge_f_basis(self, points, degree):
        S = self.sections(points, degree)
        return dc.wedge_endo_jet(S[:, 0], S[:, 1], self.spec.gram)[:, None]

    def perp_frame(self, points, degree):
        """Jets (P, 2, N) whose classes span f-perp / f."""
        S = self.sections(points, degree + 1)
        return jc.quotient_frame(S[:, 0], S[:, 1], self.spec.gram).q

    def admissible_basis(self, points, degree):
        """a^b, a^q1, a^q2, b^q1, b^q2 spanning f ^ f-perp."""
        G = self.spec.gram
        S = self.sections(points, degree + 1)
        a, b = S[:, 0].truncate(degree), S[:, 1].truncate(degree)
        q = jc.quotient_frame(S[:, 0], S[:, 1], G).q
        mats = [dc.wedge_endo_jet(a, b, G)]
        for s in (a, b):
            for k in range(2):
                mats.append(dc.wedge_endo_jet(s, q[:, k], G))
        return jc.stack(mats, axis=1)

    def curvature(self, points, degree=3, strict=False):
        S = self.sections(points, degree)
        return jc.curvature_spheres(S[:, 0], S[:, 1], self.spec.gram, strict=strict)

    def curvature_residuals(self, points):
        """|d_{T_i} sigma_i mod f| for i = 1, 2 (f-complement via Euclidean projection)."""
        cs = self.curvature(points, 2)
        S = self.sections(points, 0).value
        Q, _ = np.linalg.qr(np.swapaxes(S, -1, -2))
        out = []
        for sig, T in ((cs.sigma1, cs.T1), (cs.sigma2, cs.T2)):
            d = sig.directional(*T).value
            d = d / np.maximum(np.linalg.norm(sig.value, axis=-1, keepdims=True), 1e-300)
            proj = d - np.einsum("pik,pk->pi", Q, np.einsum("pik,pi->pk", Q, d))
            out.append(np.linalg.norm(proj, axis=-1))
        return out[0], out[1], cs

    def splitting(self, points):
        cs = self.curvature(points, 3)
        return jc.lie_cyclide_splitting(cs, self.spec.gram)

    def f_i_basis(self, points, i):
        """(P, 3, N): a, b and d_{T_i} of the other curvature sphere."""
        cs = self.curvature(points, 2)
        other, T = (cs.sigma2, cs.T1) if i == 1 else (cs.sigma1, cs.T2)
        S = self.sections(points, 0).value
        w = other.directional(*T).value
        return np.concatenate([S, w[:, None]], axis=1), cs


def _legendre_checks(ls, pts, deg=3):
    G = ls.spec.gram
    S = ls.sections(pts, deg)
    a, b = S[:, 0], S[:, 1]
    V = S.value
    scale = np.linalg.norm(V, axis=(-2, -1)) ** 2
    gram_f = np.einsum("pki,ij,plj->pkl", V, G, V)
    ls.checks["f_null"] = float(np.max(np.abs(gram_f).max(axis=(-2, -1)) / scale))
    ders = np.stack([a.deriv(1, 0), a.deriv(0, 1), b.deriv(1, 0), b.deriv(0, 1)], axis=1)
    contact = np.einsum("pki,ij,plj->pkl", ders, G, V)
    dscale = scale * (1 + np.linalg.norm(ders, axis=(-2, -1)))
    ls.checks["contact"] = float(np.max(np.abs(contact).max(axis=(-2, -1)) / dscale))
    span = np.concatenate([V, ders], axis=1)
    ls._flag("not_immersed", jc.span_rank(span)[0] != 4, pts)
    r1, r2, cs = ls.curvature_residuals(pts)
    ls._flag("umbilic_or_signature", ~cs.signature_ok, pts)
    ok = cs.signature_ok
    ls.checks["curvature_sphere_residual"] = float(np.max(np.maximum(r1, r2)[ok], initial=0.0))
    # f_i / f orthogonal and non-degenerate
    w1 = cs.sigma2.directional(*cs.T1).value
    w2 = cs.sigma1.directional(*cs.T2).value
    g12 = np.einsum("pi,ij,pj->p", w1, G, w2)
    g11 = np.einsum("pi,ij,pj->p", w1, G, w1)
    g22 = np.einsum("pi,ij,pj->p", w2, G, w2)
    n1, n2 = np.linalg.norm(w1, axis=-1), np.linalg.norm(w2, axis=-1)
    ls.checks["f1_f2_orthogonal"] = float(np.max(np.abs(g12 / (n1 * n2))[ok], initial=0.0))
    ls.checks["fi_nondegenerate_min"] = float(np.min(np.minimum(np.abs(g11) / n1**2, np.abs(g22) / n2**2)[ok],
                                                     initial=np.inf))
    # a Dupin cyclide has a constant Lie cyclide splitting
    try:
        S1, S2 = jc.lie_cyclide_splitting(ls.curvature(pts[ok], 3), G)
        d = max(max(subspace_distance(S1[0].T, S1[i].T), subspace_distance(S2[0].T, S2[i].T))
                for i in range(len(S1)))
        ls.checks["splitting_variation"] = d
        ls.dupin = d < 1e-8
    except jc.DegenerateError:
        ls.flags["splitting_degenerate"] = True
        ls.dupin = None


def legendre_lift(expr, grid=None, label=""):
    """Legendre lift of a surface in R^3 into R^{4,2}: point spheres and tangent planes."""
    expr = resolve_surface(expr) if isinstance(expr, str) else expr
    if expr.arity != 3:
        raise GeometryError("Legendre lifts are built from immersions into R^3")
    spec = GeometrySpec.lie_sphere(4, 2)

    def sections(points, degree):
        x = eval_jet(expr, points, degree + 1)
        nu = unit_normal_jet(x)
        x = x.truncate(degree)
        r2 = jc.dot(x, x)
        w = jc.dot(x, nu)
        zero = Jet2.constant(np.zeros(w.shape), degree)
        one = Jet2.constant(np.ones(w.shape), degree)
        a = jc.stack([x[..., i] for i in range(3)] + [(1.0 - r2) * 0.5, (1.0 + r2) * 0.5, zero], axis=-1)
        b = jc.stack([nu[..., i] for i in range(3)] + [zero - w, w, one], axis=-1)
        return jc.stack([a, b], axis=1)

    ls = LegendreSurface(spec, sections, expr, grid, label)
    ls.position_jet = lambda points, degree: eval_jet(expr, dc._points(points), degree)
    pts = ls.interior_points()
    if pts is not None:
        _legendre_checks(ls, pts)
    return ls


def legendre_from_sections(spec, sections_fn, expr=None, grid=None, label=""):
    ls = LegendreSurface(spec, sections_fn, expr, grid, label)
    pts = ls.interior_points()
    if pts is not None:
        _legendre_checks(ls, pts)
    return ls


def lift(geometry, expr, grid=None):
    """Dispatch on a geometry name."""
    if geometry == "projective":
        return projective_lift(expr, grid)
    if geometry == "conformal":
        return conformal_lift(expr, grid)
    if geometry == "lie_sphere_42":
        return legendre_lift(expr, grid)
    if geometry == "lie_sphere_33":
        from .contact_bridge import contact_lift

        return contact_lift(projective_lift(expr, grid))
    raise ValueError(f"unknown geometry {geometry!r}")


# ----------------------------------------------------------------------------
# quadratic differential


def quadratic_differential(form, ls, points, tol=1e-8) -> QuadDiff:
    """q(d_i, d_j) = trace of sigma -> eta(d_i) d_j sigma on f, in the frame (a, b)."""
    if not isinstance(ls, LegendreSurface):
        raise ValueError("the quadratic differential is defined for Legendre maps")
    points = dc._points(points)
    bad = ls.admissible_residual(form, points)
    if np.max(bad, initial=0.0) > tol:
        i = int(np.argmax(bad))
        raise ValueError(f"form is not f^f-perp valued (residual {bad[i]:.2e} at {tuple(points[i])})")
    S = ls.sections(points, 1)
    F = S.value  # (P, 2, N)
    pinv = np.linalg.pinv(np.swapaxes(F, -1, -2))  # (P, 2, N)
    E = form.values(points)
    q = np.zeros((len(points), 2, 2))
    for i in range(2):
        for j in range(2):
            dS = S.d(j).value  # derivatives of a, b along d_j
            img = np.einsum("pmn,pkn->pkm", E[:, i], dS)  # images of a, b
            coef = np.einsum("pcn,pkn->pkc", pinv, img)  # coordinates in (a, b)
            q[:, i, j] = coef[:, 0, 0] + coef[:, 1, 1]
    return QuadDiff(points, q)


# ----------------------------------------------------------------------------
# projective bundles


@dataclass
class ThetaBundle:
    ls: ProjectiveSurface
    dimension: np.ndarray

    def basis(self, points, degree=0):
        return self.ls.admissible_basis(points, degree)

    def sample(self, rng, modes=3):
        return self.ls.random_admissible_form(rng, "theta_sampler", modes)


def admissible_form_projective(ls: ProjectiveSurface, points=None) -> ThetaBundle:
    pts = ls.interior_points() if points is None else points
    return ThetaBundle(ls, ls.theta_dimension(pts))


def triviality_subbundle_Psi(ls: ProjectiveSurface, points, degree=0):
    """Jet basis (P, 1, 4, 4) of Psi: image in F, kernel containing F1."""
    return ls._psi_basis(dc._points(points), degree)


def quadric_closed_forms():
    """Two closed Theta-valued forms on the quadric (1, u, v, uv)."""
    def block(t, degree):
        # 2x2 block [[-t, 1], [-t^2, t]] as a jet in t
        one = Jet2.constant(np.ones(t.shape), degree)
        return [[-t, one], [-(t * t), t]]

    def embed(blocks, pairs, degree, shape):
        zero = Jet2.constant(np.zeros(shape), degree)
        rows = [[zero] * 4 for _ in range(4)]
        for (i, j) in pairs:
            for r, ir in enumerate((i, j)):
                for c, ic in enumerate((i, j)):
                    rows[ir][ic] = blocks[r][c] * 2.0
        return jc.stack([jc.stack(r, axis=-1) for r in rows], axis=-2)

    def eta_u(points, degree):
        u = Jet2.variable(0, points[:, 0], degree)
        A = embed(block(u, degree), [(0, 1), (2, 3)], degree, u.shape)
        return jc.stack([A, A * 0.0], axis=1)

    def eta_v(points, degree):
        v = Jet2.variable(1, points[:, 1], degree)
        A = embed(block(v, degree), [(0, 2), (1, 3)], degree, v.shape)
        return jc.stack([A * 0.0, A], axis=1)

    f1 = dc.AlgValuedOneForm(eta_u, 4, SPECIAL_LINEAR, None, "quadric_u", {"source": "builtin_quadric_u"})
    f2 = dc.AlgValuedOneForm(eta_v, 4, SPECIAL_LINEAR, None, "quadric_v", {"source": "builtin_quadric_v"})
    return f1, f2


def embed_conformal_form(form, label="lifted"):
    """Conformal o(4,1) form acting on R^{4,2} (trivially on the last axis)."""
    gram = MetricSpace.canonical(4, 2).gram

    def build(points, degree):
        J = form.jets(points, degree)
        c = np.zeros(J.c.shape[:-2] + (6, 6))
        c[..., :5, :5] = J.c
        return Jet2(c, J.degree)
    return dc.AlgValuedOneForm(build, 6, ORTHOGONAL, gram, label, {"source": label, "from": form.provenance})


def sphere_form(ls: LegendreSurface, alpha=1.0, which=1):
    """X -> alpha sigma_i ^ d_X sigma_i for a curvature sphere sigma_i (f^f-perp valued, q != 0)."""
    G = ls.spec.gram

    def build(points, degree):
        S = ls.sections(points, degree + 2)
        cs = jc.curvature_spheres(S[:, 0], S[:, 1], G, strict=False)
        sig = cs.sigma1 if which == 1 else cs.sigma2
        s0 = sig.truncate(degree)
        comps = [dc.wedge_endo_jet(s0, sig.d(ax), G) * alpha for ax in (0, 1)]
        return jc.stack(comps, axis=1)
    return dc.AlgValuedOneForm(build, ls.dim, ORTHOGONAL, G, f"sphere_form_{which}",
                               {"source": "curvature_sphere_form", "alpha": alpha})


# ----------------------------------------------------------------------------
# third order audit


@dataclass
class ChainLink:
    name: str
    residual: float
    passed: bool


@dataclass
class AuditReport:
    geometry: str
    eta_norm: float
    links: list = field(default_factory=list)
    third_order_ratio: float = 0.0
    tol: float = 1e-6

    @property
    def passes_third_order(self):
        return all(l.passed for l in self.links[:2])

    @property
    def first_failing_link(self):
        for l in self.links:
            if not l.passed:
                return l.name
        return None

    @property
    def rigidity_witnessed(self):
        return self.eta_norm > 0 and self.third_order_ratio > 0.1

    def as_dict(self):
        return {
            "geometry": self.geometry,
            "eta_norm": self.eta_norm,
            "third_order_ratio": self.third_order_ratio,
            "passes_third_order": self.passes_third_order,
            "first_failing_link": self.first_failing_link,
            "links": [{"name": l.name, "residual": l.residual, "passed": l.passed} for l in self.links],
        }


def third_order_audit(ls, form, points=None, tol=1e-6, seed=42) -> AuditReport:
    """Residual chain of the third-order rigidity argument for one form."""
    pts = ls.interior_points() if points is None else dc._points(points)
    eta_norm = float(np.max(form.norm(pts)))
    rep = AuditReport(ls.spec.name, eta_norm, tol=tol)

    def add(name, value):
        value = float(value)
        rep.links.append(ChainLink(name, value, bool(value < tol)))

    inv = dc.invariant_condition_residual(form, ls, pts, 2)
    chart, valid = dc.chart_condition_residual(form, ls, pts, 2, seed=seed)
    add("third_order_invariant", np.max(inv))
    add("third_order_chart", np.nanmax(np.where(valid, chart, np.nan)) if np.any(valid) else 0.0)
    rep.third_order_ratio = float(np.max(inv)) / eta_norm if eta_norm > 0 else 0.0
    E = form.values(pts)
    J = form.jets(pts, 1)
    if isinstance(ls, ProjectiveSurface):
        s = ls.point_jet(pts, 1)
        scale = np.linalg.norm(s.value, axis=-1)[:, None]
        worst = 0.0
        for Y in (0, 1):
            for d in (s.deriv(1, 0), s.deriv(0, 1)):
                worst = max(worst, float(np.max(np.linalg.norm(np.einsum("pij,pj->pi", E[:, Y], d / scale), axis=-1))))
        add("eta_kills_F1", worst)
        add("eta_zero", eta_norm)
    elif isinstance(ls, ConformalSurface):
        s = ls.point_jet(pts, 0).value
        s = s / np.linalg.norm(s, axis=-1, keepdims=True)
        worst = 0.0
        for ax in (0, 1):
            D = J.d(ax).value
            for Y in (0, 1):
                worst = max(worst, float(np.max(np.linalg.norm(np.einsum("pij,pj->pi", D[:, Y], s), axis=-1))))
        add("derivative_kills_F", worst)
        add("eta_zero", eta_norm)
    else:
        S = ls.sections(pts, 0).value
        S = S / np.linalg.norm(S, axis=-1, keepdims=True)
        worst = 0.0
        for ax in (0, 1):
            D = J.d(ax).value
            for Y in (0, 1):
                worst = max(worst, float(np.max(np.linalg.norm(np.einsum("pij,pkj->pki", D[:, Y], S), axis=-1))))
        add("derivative_kills_f", worst)
        Q = ls.perp_frame(pts, 0).value
        Q = Q / np.linalg.norm(Q, axis=-1, keepdims=True)
        worst = 0.0
        for Y in (0, 1):
            worst = max(worst, float(np.max(np.linalg.norm(np.einsum("pij,pkj->pki", E[:, Y], Q), axis=-1))))
        add("eta_kills_f_perp", worst)
        add("eta_zero", eta_norm)
    return rep
