import numpy as np
import pytest

from gdeform import deform_core as dc
from gdeform import geometries as geo
from gdeform.jetcalc import span_rank
from gdeform.surface_dsl import ParamGrid

from conftest import QUADRIC_GRID


def test_spec_names():
    assert geo.spec_from_name("lie_sphere_33").ambient.signature == (3, 3)
    assert geo.spec_from_name("conformal").ambient.signature == (4, 1)
    assert geo.GeometrySpec.projective().name == "projective"
    with pytest.raises(ValueError):
        geo.spec_from_name("hyperbolic")


def test_projective_quadric(projective_quadric):
    ls = projective_quadric
    pts = ls.interior_points()
    r1, r2 = ls.ranks(pts)
    assert np.all(r1 == 3) and np.all(r2 == 4)
    assert np.all(ls.asymptotic_real)
    assert np.allclose(ls.asymptotic_directions[:, :, 0], [1, 0])
    assert np.allclose(ls.asymptotic_directions[:, :, 1], [0, 1])
    assert not ls.flags["F1_rank_not_3"] and not ls.flags["F2_not_R4"]


def test_projective_plane_is_rejected():
    with pytest.raises(geo.GeometryError, match="F2_not_R4"):
        geo.projective_lift("(1, u, v, 0)", QUADRIC_GRID)


def test_projective_elliptic_paraboloid_has_complex_directions():
    ls = geo.projective_lift("(1, u, v, u*u + v*v)", QUADRIC_GRID)
    assert not np.any(ls.asymptotic_real)


def test_theta_bundle(projective_quadric, rng):
    ls = projective_quadric
    pts = ls.interior_points()
    bundle = geo.admissible_form_projective(ls)
    assert np.all(bundle.dimension == bundle.dimension[0])
    assert ls.checks["theta_dimension"] == 5
    form = bundle.sample(rng)
    V = form.values(pts)
    s = ls.point_jet(pts, 1)
    sig, su, sv = s.value, s.deriv(1, 0), s.deriv(0, 1)
    for Y in (0, 1):
        A = V[:, Y]
        assert np.abs(np.trace(A, axis1=-2, axis2=-1)).max() < 1e-12
        assert np.abs(np.einsum("pij,pj->pi", A, sig)).max() < 1e-12
        for d in (su, sv):
            img = np.einsum("pij,pj->pi", A, d)
            # image of F1 lies in F: img is a multiple of sigma
            coef = np.einsum("pi,pi->p", img, sig) / np.einsum("pi,pi->p", sig, sig)
            assert np.abs(img - coef[:, None] * sig).max() < 1e-12


def test_psi_bundle(projective_quadric):
    pts = projective_quadric.interior_points()
    Psi = geo.triviality_subbundle_Psi(projective_quadric, pts).value[:, 0]
    assert np.abs(Psi @ Psi).max() < 1e-12
    assert np.all(span_rank(Psi.reshape(len(pts), 1, 16))[0] == 1)


def test_conformal_cylinder(conformal_cylinder):
    ls = conformal_cylinder
    assert ls.checks["null_lift"] < 1e-13
    assert ls.checks["F1_rank"] == 3
    assert ls.checks["F1_in_F_perp"] < 1e-10


def test_conformal_sphere_patch():
    ls = geo.conformal_lift("sphere", ParamGrid((0.0, 1.0), (-0.6, 0.6), 10, 10))
    assert ls.checks["F1_rank"] == 3
    assert ls.checks["F1_in_F_perp"] < 1e-10


def test_conformal_requires_three_components():
    with pytest.raises(geo.GeometryError):
        geo.conformal_lift("quadric", QUADRIC_GRID)


def test_legendre_cylinder(legendre_cylinder):
    ls = legendre_cylinder
    assert ls.checks["f_null"] < 1e-12
    assert ls.checks["contact"] < 1e-12
    assert ls.checks["curvature_sphere_residual"] < 1e-9
    assert ls.checks["f1_f2_orthogonal"] < 1e-9
    assert ls.checks["fi_nondegenerate_min"] > 1e-3
    cs = ls.curvature(ls.interior_points(), 2)
    T = np.abs(np.stack([cs.T1[0].value, cs.T1[1].value, cs.T2[0].value, cs.T2[1].value], -1))
    assert np.allclose(T, [1, 0, 0, 1], atol=1e-12)


def test_f_i_rank_and_orthogonality(legendre_saddle):
    ls = legendre_saddle
    pts = ls.interior_points()
    G = ls.spec.gram
    for i in (1, 2):
        B, _ = ls.f_i_basis(pts, i)
        assert np.all(span_rank(B)[0] == 3)
    assert ls.checks["f1_f2_orthogonal"] < 1e-9


def test_quadratic_differential_of_trivial_and_zero_forms(legendre_saddle, rng):
    ls = legendre_saddle
    pts = ls.interior_points()
    zero = dc.AlgValuedOneForm.zero(6, ls.spec.group_kind, ls.spec.gram)
    assert np.all(geo.quadratic_differential(zero, ls, pts).values == 0)
    triv = ls.random_trivial_form(rng)
    assert geo.quadratic_differential(triv, ls, pts).max_abs < 1e-10


def test_quadratic_differential_of_sphere_form(legendre_cylinder):
    ls = legendre_cylinder
    pts = ls.interior_points()[::9]
    alpha = 0.35
    form = geo.sphere_form(ls, alpha, which=1)
    q = geo.quadratic_differential(form, ls, pts).values
    cs = ls.curvature(pts, 2)
    G = ls.spec.gram
    T2 = np.stack([cs.T2[0].value, cs.T2[1].value], -1)
    ds = np.stack([cs.sigma1.d(0).value, cs.sigma1.d(1).value], 1)  # (P, 2, N)
    ds_T2 = np.einsum("pa,pan->pn", T2, ds)
    expected = -alpha * np.einsum("pi,ij,pj->p", ds_T2, G, ds_T2)
    got = np.einsum("pa,pab,pb->p", T2, q, T2)
    assert np.allclose(got, expected, atol=1e-10)
    assert np.abs(expected).min() > 1e-3


def test_quadratic_differential_rejects_inadmissible(legendre_saddle):
    ls = legendre_saddle
    A = np.zeros((6, 6))
    A[0, 1], A[1, 0] = 1.0, -1.0
    form = dc.AlgValuedOneForm.constant(A, A, ls.spec.group_kind, ls.spec.gram)
    with pytest.raises(ValueError, match="not f"):
        geo.quadratic_differential(form, ls, ls.interior_points())


def test_quadric_closed_forms(projective_quadric):
    pts = projective_quadric.interior_points()
    for form in geo.quadric_closed_forms():
        assert projective_quadric.admissible_residual(form, pts).max() < 1e-12
        assert dc.closure_residual(form, pts).max() < 1e-12
        assert form.algebra_residual(pts).max() < 1e-12


def test_third_order_audit_zero_and_isothermic(conformal_cylinder):
    ls = conformal_cylinder
    zero = dc.AlgValuedOneForm.zero(5, ls.spec.group_kind, ls.spec.gram)
    rep = geo.third_order_audit(ls, zero)
    assert rep.passes_third_order and rep.first_failing_link is None and not rep.rigidity_witnessed
    rep = geo.third_order_audit(ls, dc.isothermic_form_builder(ls))
    assert not rep.passes_third_order
    assert rep.third_order_ratio > 0.1 and rep.rigidity_witnessed
    assert rep.first_failing_link == "third_order_invariant"
    assert [l.name for l in rep.links][-1] == "eta_zero"


@pytest.mark.parametrize("which", ["projective", "conformal", "lie"])
def test_random_admissible_forms_fail_third_order(which, projective_quadric, conformal_cylinder,
                                                  legendre_saddle):
    ls = {"projective": projective_quadric, "conformal": conformal_cylinder, "lie": legendre_saddle}[which]
    rng = np.random.default_rng(7)
    pts = ls.interior_points()
    for _ in range(20):
        rep = geo.third_order_audit(ls, ls.random_admissible_form(rng), pts)
        assert not rep.passes_third_order
        assert rep.third_order_ratio > 0.1


def test_lift_dispatch():
    grid = QUADRIC_GRID
    assert geo.lift("projective", "quadric", grid).spec.name == "projective"
    assert geo.lift("lie_sphere_33", "quadric", grid).spec.name == "lie_sphere_33"
    with pytest.raises(ValueError):
        geo.lift("spherical", "quadric", grid)
