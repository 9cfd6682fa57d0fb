import numpy as np

from gdeform import contact_bridge as cb
from gdeform import deform_core as dc
from gdeform import geometries as geo
from gdeform.multilinear import PLUCKER_TO_R33, bracket, random_sl, span_residual, wedge


def plucker_relation(w):
    """p12 p34 - p13 p24 + p14 p23 in lexicographic Pluecker coordinates."""
    return w[..., 0] * w[..., 5] - w[..., 1] * w[..., 4] + w[..., 2] * w[..., 3]


def test_phi_homomorphism(rng):
    A, B = random_sl(rng, 4, (2, 50))
    err = np.abs(cb.phi(bracket(A, B)) - bracket(cb.phi(A), cb.phi(B)))
    assert err.max() < 1e-11


def test_contact_lift_is_a_null_legendre_map(projective_quadric, lie_quadric):
    ls = lie_quadric
    pts = ls.interior_points()
    assert ls.checks["f_null"] < 1e-12
    assert ls.checks["contact"] < 1e-9
    assert ls.checks["f1_formula"] < 1e-9
    # every element of f is decomposable: Pluecker relation on random combinations
    S = ls.sections(pts, 0).value @ PLUCKER_TO_R33  # back to Pluecker coordinates
    t = np.random.default_rng(1).normal(size=(len(pts), 2))
    comb = np.einsum("pk,pki->pi", t, S)
    assert np.abs(plucker_relation(comb)).max() < 1e-12
    assert cb.BridgeContext(projective_quadric, ls).f_matches(pts) < 1e-12


def test_curvature_directions_are_asymptotic(projective_quadric, lie_quadric):
    assert cb.curvature_vs_asymptotic(lie_quadric, lie_quadric.interior_points()) < 1e-10


def test_subspace_images(projective_quadric, lie_quadric):
    pts = projective_quadric.interior_points()
    theta_gap, psi_gap = cb.subspace_images(projective_quadric, lie_quadric, pts)
    assert theta_gap.max() < 1e-10 and psi_gap.max() < 1e-10


def test_transfer_zero_and_intertwining(projective_quadric, rng):
    pts = projective_quadric.interior_points()
    zero = dc.AlgValuedOneForm.zero(4, projective_quadric.spec.group_kind)
    assert np.all(cb.transfer_form(zero).values(pts) == 0)
    assert cb.intertwining_residual(projective_quadric.random_admissible_form(rng), pts) < 1e-12


def test_transfer_preserves_triviality(projective_quadric, lie_quadric, rng):
    proj, lie = projective_quadric, lie_quadric
    pts = proj.interior_points()
    triv = proj.random_trivial_form(rng)
    T = cb.transfer_form(triv, proj, pts)
    assert geo.quadratic_differential(T, lie, pts).max_abs < 1e-10
    # phi(xi) lies in ^2 f
    xi = geo.triviality_subbundle_Psi(proj, pts).value[:, 0]
    gap, _ = span_residual(cb.phi(xi), lie.trivial_basis(pts, 0).value)
    assert gap.max() < 1e-10
    f1, f2 = geo.quadric_closed_forms()
    T = cb.transfer_form(f1 + f2, proj, pts)
    assert geo.quadratic_differential(T, lie, pts).max_abs > 1e-3


def test_transfer_checks_theta_values(projective_quadric, rng):
    bad = dc.AlgValuedOneForm.constant(*random_sl(rng, 4, 2), projective_quadric.spec.group_kind)
    try:
        cb.transfer_form(bad, projective_quadric, projective_quadric.interior_points())
    except ValueError as exc:
        assert "not Theta-valued" in str(exc)
    else:
        raise AssertionError("inadmissible form was transferred")


def test_f_is_spanned_by_wedges(projective_quadric):
    pts = projective_quadric.interior_points()[:3]
    s = projective_quadric.point_jet(pts, 1)
    w = wedge(s.value, s.deriv(1, 0))
    assert np.abs(plucker_relation(w)).max() < 1e-14
