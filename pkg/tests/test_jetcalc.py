import math

import numpy as np
import pytest

from gdeform import jetcalc as jc
from gdeform.jetcalc import Jet2, JetDomainError
from gdeform.surface_dsl import eval_jet, parse


def fd_coeffs(f, u0, v0, h=1e-4):
    """Taylor coefficients up to order 2 by central differences."""
    d = {}
    d[(0, 0)] = f(u0, v0)
    d[(1, 0)] = (f(u0 + h, v0) - f(u0 - h, v0)) / (2 * h)
    d[(0, 1)] = (f(u0, v0 + h) - f(u0, v0 - h)) / (2 * h)
    d[(2, 0)] = (f(u0 + h, v0) - 2 * f(u0, v0) + f(u0 - h, v0)) / h**2 / 2
    d[(0, 2)] = (f(u0, v0 + h) - 2 * f(u0, v0) + f(u0, v0 - h)) / h**2 / 2
    d[(1, 1)] = (f(u0 + h, v0 + h) - f(u0 + h, v0 - h) - f(u0 - h, v0 + h) + f(u0 - h, v0 - h)) / (4 * h * h)
    return d


def uv(point, degree=3):
    return Jet2.variable(0, point[0], degree), Jet2.variable(1, point[1], degree)


def test_sin_maclaurin():
    u, _ = uv((0.0, 0.0))
    s = u.sin()
    assert np.allclose([s.c[k, 0] for k in range(4)], [0, 1, 0, -1 / 6], atol=1e-15)


def test_reciprocal_product_is_one():
    u, v = uv((0.3, 0.7), 4)
    j = (u * v).exp() + u.cos() * 2.0
    prod = j * j.reciprocal()
    assert abs(prod.value - 1) < 1e-14
    prod.c[0, 0] = 0.0
    assert np.abs(prod.c).max() < 1e-14


ELEMENTARY = {
    "sin": (lambda j: j.sin(), np.sin),
    "cos": (lambda j: j.cos(), np.cos),
    "exp": (lambda j: j.exp(), np.exp),
    "sqrt": (lambda j: j.sqrt(), np.sqrt),
    "recip": (lambda j: 1.0 / j, lambda x: 1.0 / x),
    "pow": (lambda j: j ** 3, lambda x: x**3),
    "rpow": (lambda j: j.power(1.7), lambda x: x**1.7),
}


@pytest.mark.parametrize("name", sorted(ELEMENTARY))
def test_elementary_ops_against_finite_differences(name):
    jop, fop = ELEMENTARY[name]
    u0, v0 = 0.4, 0.9
    inner = lambda u, v: 1.2 + u * v + 0.3 * u * u  # noqa: E731
    u, v = uv((u0, v0), 2)
    jet = jop(1.2 + u * v + 0.3 * u * u)
    ref = fd_coeffs(lambda a, b: fop(inner(a, b)), u0, v0)
    for (a, b), val in ref.items():
        assert abs(jet.c[a, b] - val) < 1e-6, (a, b)


def test_domain_errors():
    u, _ = uv((0.0, 0.0))
    with pytest.raises(JetDomainError):
        u.reciprocal()
    with pytest.raises(JetDomainError):
        u.sqrt()


def test_iterated_derivative_basics():
    sig = eval_jet(parse("(1, u, v, u*v)"), (0.3, -0.2), 3)
    assert np.array_equal(jc.iterated_derivative(sig, ""), sig.value)
    assert np.array_equal(jc.iterated_derivative(sig, "uv"), jc.iterated_derivative(sig, "vu"))
    assert np.array_equal(jc.iterated_derivative(sig, [0, 1]), [0, 0, 0, 1])


@pytest.mark.parametrize("J", [(1, 0), (0, 1), (2, 0), (1, 1), (2, 1), (0, 3)])
def test_leibniz_expansion(J, rng):
    sig = eval_jet(parse("(1 + u*v, sin(u), cos(v) - u, exp(u*v))"), (0.2, 0.5), 3)
    v0 = rng.normal(size=4)
    prod = jc.expand(sig.apply(lambda c: c @ v0), sig) * sig
    a, b = J
    lhs = prod.deriv(a, b)
    rhs = 0.0
    # sum over labelled subsets: choose i of the a u-labels and j of the b v-labels
    for i in range(a + 1):
        for j in range(b + 1):
            w = math.comb(a, i) * math.comb(b, j)
            rhs = rhs + w * (sig.deriv(i, j) @ v0) * sig.deriv(a - i, b - j)
    assert np.abs(lhs - rhs).max() < 1e-12


def test_derived_bundle_ranks_of_quadric():
    sig = eval_jet(parse("(1, u, v, u*v)"), (0.0, 0.0), 3)
    assert jc.span_with_derivatives(sig, 1).rank == 3
    assert jc.span_with_derivatives(sig, 2).rank == 4
    const = eval_jet(parse("(1, 2, 3, 4)"), (0.5, 0.5), 3)
    for k in range(3):
        assert jc.span_with_derivatives(const, k).rank == 1


def test_asymptotic_directions():
    d1, d2 = jc.asymptotic_directions(eval_jet(parse("(1, u, v, u*v)"), (0.3, 0.4), 2))
    assert np.allclose(d1.direction, [1, 0]) and np.allclose(d2.direction, [0, 1])
    c1, c2 = jc.asymptotic_directions(eval_jet(parse("(1, u, v, u^2 + v^2)"), (0.3, 0.4), 2))
    assert c1.realness == "complex_pair" and np.allclose(c1.direction, c2.direction.conj())
    h1, h2 = jc.asymptotic_directions(eval_jet(parse("(1, u, v, u^2 - v^2)"), (0.3, 0.4), 2))
    r = 1 / np.sqrt(2)
    assert np.allclose(h1.direction, [r, r]) and np.allclose(h2.direction, [r, -r])


def test_inverse_of_matrix_jet(rng):
    u, v = uv((0.1, 0.2), 3)
    M0 = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    M = jc.stack([jc.stack([u * M0[i, j] + v * v + (i == j) * 2.0 for j in range(3)], -1)
                  for i in range(3)], -2)
    eye = jc.matmul(M, jc.inv(M))
    assert np.allclose(eye.value, np.eye(3), atol=1e-13)
    eye.c[0, 0] = 0.0
    assert np.abs(eye.c).max() < 1e-12


def _generalized_eigen_oracle(ls, p):
    """Curvature directions of the Legendre lift from the shape operator of the R^3 surface."""
    x = ls.position_jet(np.array([p]), 2)
    xu, xv = x.deriv(1, 0)[0], x.deriv(0, 1)[0]
    n = np.cross(xu, xv)
    n /= np.linalg.norm(n)
    I = np.array([[xu @ xu, xu @ xv], [xu @ xv, xv @ xv]])
    II = np.array([[x.deriv(2, 0)[0] @ n, x.deriv(1, 1)[0] @ n], [x.deriv(1, 1)[0] @ n, x.deriv(0, 2)[0] @ n]])
    from scipy.linalg import eigh

    _, vecs = eigh(II, I)
    return [v / np.linalg.norm(v) for v in vecs.T]


def test_curvature_spheres_cylinder(legendre_cylinder):
    ls = legendre_cylinder
    pts = ls.interior_points()[::5]
    r1, r2, cs = ls.curvature_residuals(pts)
    assert max(r1.max(), r2.max()) < 1e-9
    T = [np.stack([cs.T1[0].value, cs.T1[1].value], -1), np.stack([cs.T2[0].value, cs.T2[1].value], -1)]
    for k, p in enumerate(pts):
        oracle = _generalized_eigen_oracle(ls, p)
        for t in (T[0][k], T[1][k]):
            assert min(abs(abs(t @ o) - 1) for o in oracle) < 1e-9


def test_curvature_spheres_swap_with_parameter_labels(legendre_cylinder):
    from gdeform.geometries import legendre_from_sections

    def swapped_sections(points, degree):
        S = legendre_cylinder.sections(points[:, ::-1], degree)
        return Jet2(np.swapaxes(S.c, 0, 1), degree)

    swapped = legendre_from_sections(legendre_cylinder.spec, swapped_sections)
    p = np.array([[0.7, 0.2]])
    a = legendre_cylinder.curvature(p, 2)
    b = swapped.curvature(p[:, ::-1], 2)
    assert np.allclose([a.T1[0].value, a.T1[1].value], [b.T2[1].value, b.T2[0].value], atol=1e-12)
    assert np.allclose([a.T2[0].value, a.T2[1].value], [b.T1[1].value, b.T1[0].value], atol=1e-12)
    for x, y in ((a.sigma1, b.sigma2), (a.sigma2, b.sigma1)):
        sx = x.value / np.linalg.norm(x.value)
        sy = y.value / np.linalg.norm(y.value)
        assert min(np.abs(sx - sy).max(), np.abs(sx + sy).max()) < 1e-12


def test_lie_cyclide_splitting(legendre_cylinder, legendre_saddle):
    G = legendre_cylinder.spec.gram
    for ls in (legendre_cylinder, legendre_saddle):
        pts = ls.interior_points()[::7]
        S1, S2 = ls.splitting(pts)
        assert np.all(jc.span_rank(S1)[0] == 3) and np.all(jc.span_rank(S2)[0] == 3)
        assert np.all(jc.span_rank(np.concatenate([S1, S2], axis=1))[0] == 6)
        cross = np.einsum("pki,ij,plj->pkl", S1, G, S2)
        scale = np.linalg.norm(S1, axis=-1)[:, :, None] * np.linalg.norm(S2, axis=-1)[:, None, :]
        assert np.abs(cross / scale).max() < 1e-9


def test_dupin_cyclide_has_constant_splitting(legendre_cylinder, legendre_saddle):
    assert legendre_cylinder.dupin is True
    assert legendre_cylinder.checks["splitting_variation"] < 1e-8
    assert legendre_saddle.dupin is False
    assert legendre_cylinder.checks["curvature_sphere_residual"] < 1e-9
