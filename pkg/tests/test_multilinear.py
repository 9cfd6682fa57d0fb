from itertools import permutations

import numpy as np
import pytest

from gdeform.multilinear import (
    ORTHOGONAL,
    PLUCKER_TO_R33,
    SPECIAL_LINEAR,
    AlgebraElement,
    MetricSpace,
    WedgeSpace,
    bracket,
    exp_two_step_nilpotent,
    induced_action,
    random_o,
    random_sl,
    signature_of,
    sl4_to_o33,
    wedge,
    wedge_endomorphism,
    wedge_square_group,
)


def perm_sign(p):
    p = list(p)
    s = 1
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                s = -s
    return s


def brute_det(M):
    n = len(M)
    return sum(perm_sign(p) * np.prod([M[i][p[i]] for i in range(n)]) for p in permutations(range(n)))


def test_wedge_basics():
    e = np.eye(4)
    assert np.all(wedge(e[0], e[0]) == 0)
    out = wedge(e[0], e[1])
    assert out[0] == 1 and np.count_nonzero(out) == 1


def test_induced_gram_matches_determinant_identity(rng):
    space = MetricSpace.canonical(4, 2)
    ws = WedgeSpace(space)
    G = space.gram
    for _ in range(50):
        v, w, x, y = rng.normal(size=(4, 6))
        lhs = wedge(v, w) @ ws.induced_gram @ wedge(x, y)
        ip = lambda a, b: a @ G @ b  # noqa: E731
        rhs = brute_det([[ip(v, x), ip(v, y)], [ip(w, x), ip(w, y)]])
        assert abs(lhs - rhs) < 1e-12 * (1 + abs(rhs))


def test_volume_pairing_is_the_4x4_determinant(rng):
    ws = WedgeSpace(MetricSpace.plain(4))
    for _ in range(10):
        v, w, x, y = rng.normal(size=(4, 4))
        assert abs(wedge(v, w) @ ws.volume_gram @ wedge(x, y) - brute_det(np.stack([v, w, x, y]))) < 1e-12


def test_induced_action_trivial_cases():
    assert np.all(induced_action(np.zeros((4, 4))) == 0)
    assert np.allclose(induced_action(np.eye(4)), 2 * np.eye(6))


def test_induced_action_is_leibniz_on_decomposables(rng):
    A = rng.normal(size=(5, 5))
    v, w = rng.normal(size=(2, 5))
    assert np.allclose(induced_action(A) @ wedge(v, w), wedge(A @ v, w) + wedge(v, A @ w), atol=1e-12)


def test_induced_action_is_a_homomorphism(rng):
    A = random_sl(rng, 4, 100)
    B = random_sl(rng, 4, 100)
    err = np.abs(induced_action(bracket(A, B)) - bracket(induced_action(A), induced_action(B)))
    assert err.max() < 1e-11


def test_compound_matrix_is_the_group_version(rng):
    g = rng.normal(size=(4, 4))
    v, w = rng.normal(size=(2, 4))
    assert np.allclose(wedge_square_group(g) @ wedge(v, w), wedge(g @ v, g @ w), atol=1e-12)
    h = rng.normal(size=(4, 4))
    assert np.allclose(wedge_square_group(g @ h), wedge_square_group(g) @ wedge_square_group(h), atol=1e-12)


def test_sl4_lands_in_o33(rng):
    G = np.diag([1.0, 1, 1, -1, -1, -1])
    assert signature_of(PLUCKER_TO_R33 @ WedgeSpace(MetricSpace.plain(4)).volume_gram @ PLUCKER_TO_R33.T) == (3, 3)
    A = random_sl(rng, 4, 20)
    M = sl4_to_o33(A)
    assert np.abs(np.swapaxes(M, -1, -2) @ G + G @ M).max() < 1e-12


def test_bracket_identities(rng):
    space = MetricSpace.canonical(3, 1)
    A, B, C = (AlgebraElement(space, m, ORTHOGONAL) for m in random_o(rng, space.gram, 3))
    assert np.all(bracket(A, A).matrix == 0)
    assert np.array_equal(bracket(A, B).matrix, -bracket(B, A).matrix)
    jac = bracket(A, bracket(B, C)) + bracket(B, bracket(C, A)) + bracket(C, bracket(A, B))
    assert np.abs(jac.matrix).max() < 1e-12


def test_algebra_element_validation():
    space = MetricSpace.plain(3)
    with pytest.raises(ValueError, match="trace"):
        AlgebraElement(space, np.eye(3), SPECIAL_LINEAR)
    with pytest.raises(ValueError, match="metric"):
        AlgebraElement(space, np.zeros((3, 3)), ORTHOGONAL)
    with pytest.raises(ValueError, match="signature"):
        MetricSpace(2, (2, 0), np.diag([1.0, -1.0]))


def test_exp_two_step_nilpotent_on_null_plane(rng):
    space = MetricSpace.canonical(3, 3)
    G = space.gram
    assert np.array_equal(exp_two_step_nilpotent(np.zeros((6, 6))), np.eye(6))
    # f = span(e1 + e4, e2 + e5) is null in R^{3,3}
    a = np.array([1.0, 0, 0, 1, 0, 0])
    b = np.array([0, 1.0, 0, 0, 1, 0])
    xi = 0.7 * wedge_endomorphism(a, b, G)
    g = exp_two_step_nilpotent(xi)
    assert np.abs(g.T @ G @ g - G).max() < 1e-12
    with pytest.raises(ValueError):
        exp_two_step_nilpotent(random_o(rng, G))


def test_exp_two_step_nilpotent_projective_quadric(projective_quadric):
    from gdeform.geometries import triviality_subbundle_Psi

    pts = projective_quadric.interior_points()[:5]
    Psi = triviality_subbundle_Psi(projective_quadric, pts).value[:, 0]
    for xi in Psi:
        assert np.linalg.det(exp_two_step_nilpotent(xi)) == pytest.approx(1.0, abs=1e-12)
