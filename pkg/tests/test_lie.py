import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import dense_element, random_rotation, rodrigues_expm, skew
from seslam.lie import (GroupElement, TangentElement, compose, embed, embed_tangent, exp_so3,
                        from_matrix, group_action_measure, hat, inverse, is_rotation,
                        landmark_vector, lie_bracket, log_so3, orthonormalize,
                        project_to_so3, rotation_angle, rotation_from_angle_axis,
                        struct_matrices, vee)

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)
vec3 = arrays(np.float64, 3, elements=finite)


def random_element(rng, n):
    return GroupElement(random_rotation(rng), rng.normal(size=3), rng.normal(size=3),
                        rng.normal(size=3), rng.normal(size=(n, 3)))


@st.composite
def elements(draw, n=None):
    n = draw(st.sampled_from([1, 5, 15])) if n is None else n
    seed = draw(st.integers(0, 2 ** 32 - 1))
    return random_element(np.random.default_rng(seed), n)


# -- hat / vee -----------------------------------------------------------------

def test_hat_example():
    np.testing.assert_array_equal(hat([1, 2, 3]), [[0, -3, 2], [3, 0, -1], [-2, 1, 0]])
    np.testing.assert_array_equal(hat([0, 0, 0]), np.zeros((3, 3)))
    np.testing.assert_array_equal(hat([1, 0, 0]) @ [0, 1, 0], [0, 0, 1])


def test_vee_examples():
    np.testing.assert_array_equal(vee(hat([1, 2, 3])), [1, 2, 3])
    np.testing.assert_array_equal(vee(np.zeros((3, 3))), np.zeros(3))
    with pytest.raises(ValueError):
        vee([[0, 1, 0], [1, 0, 0], [0, 0, 0]])
    with pytest.raises(ValueError):
        vee(np.zeros((2, 2)))


@given(vec3, vec3)
def test_hat_is_cross_product(w, y):
    np.testing.assert_allclose(hat(w) @ y, np.cross(w, y), atol=1e-14 * (1 + np.abs(w).max() * np.abs(y).max()))
    np.testing.assert_array_equal(hat(w).T, -hat(w))
    np.testing.assert_array_equal(vee(hat(w)), w)


# -- rotations -----------------------------------------------------------------

def test_rodrigues_examples():
    np.testing.assert_array_equal(rotation_from_angle_axis(0.0, [0, 1, 0]), np.eye(3))
    np.testing.assert_allclose(rotation_from_angle_axis(np.pi / 2, [0, 0, 1]),
                               [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)
    with pytest.raises(ValueError):
        rotation_from_angle_axis(1.0, [1, 1, 1])


def test_initial_attitude_estimate_axis_is_normalised():
    u = np.ones(3) / np.sqrt(3)
    R = rotation_from_angle_axis(0.5 * np.pi, u)
    assert is_rotation(R)
    np.testing.assert_allclose(R @ u, u, atol=1e-15)
    assert rotation_angle(R) == pytest.approx(0.5 * np.pi, abs=1e-12)
    np.testing.assert_allclose(R, rodrigues_expm(0.5 * np.pi, u), atol=1e-12)


@given(st.floats(-2 * np.pi, 2 * np.pi), vec3.filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_rodrigues_matches_matrix_exponential(theta, v):
    v = v / np.linalg.norm(v)
    R = rotation_from_angle_axis(theta, v)
    np.testing.assert_allclose(R, rodrigues_expm(theta, v), atol=1e-10)
    assert is_rotation(R)


@given(arrays(np.float64, 3, elements=st.floats(-3, 3)))
def test_exp_log_round_trip(phi):
    if np.linalg.norm(phi) > np.pi - 1e-3:
        phi = phi / np.linalg.norm(phi) * (np.pi - 1e-3)
    np.testing.assert_allclose(log_so3(exp_so3(phi)), phi, atol=1e-8)
    np.testing.assert_allclose(exp_so3(phi), rodrigues_expm(1.0, phi), atol=1e-12)


def test_log_near_pi():
    axis = np.array([1.0, 2.0, -2.0]) / 3.0
    phi = log_so3(rotation_from_angle_axis(np.pi, axis))
    assert np.linalg.norm(phi) == pytest.approx(np.pi)
    assert abs(abs(phi @ axis) - np.pi) < 1e-6


def test_orthonormalize_restores_rotation(rng):
    R = random_rotation(rng) + 1e-6 * rng.normal(size=(3, 3))
    Q = orthonormalize(R)
    assert np.linalg.norm(Q.T @ Q - np.eye(3)) <= 1e-12
    assert np.linalg.det(Q) == pytest.approx(1.0)
    R0 = random_rotation(rng)
    assert orthonormalize(R0) is not None and np.array_equal(orthonormalize(R0), R0)
    np.testing.assert_allclose(project_to_so3(2.0 * R0), R0, atol=1e-14)


# -- group ---------------------------------------------------------------------

def test_compose_identity_and_pure_translation():
    rng = np.random.default_rng(0)
    b = random_element(rng, 3)
    e = compose(GroupElement.identity(3), b)
    np.testing.assert_array_equal(embed(e), embed(b))
    a1, b1 = rng.normal(size=(2, 3 + 2, 3))
    A = GroupElement(np.eye(3), a1[0], a1[1], a1[2], a1[3:])
    B = GroupElement(np.eye(3), b1[0], b1[1], b1[2], b1[3:])
    C = compose(A, B)
    np.testing.assert_allclose(C.columns(), a1 + b1, atol=0)


def test_compose_matches_dense_product_example():
    rng = np.random.default_rng(1)
    a, b = random_element(rng, 2), random_element(rng, 2)
    Xa = dense_element(a.r, a.columns())
    Xb = dense_element(b.r, b.columns())
    np.testing.assert_allclose(embed(compose(a, b)), Xa @ Xb, atol=1e-12)


def test_compose_rejects_mismatched_n():
    rng = np.random.default_rng(2)
    with pytest.raises(ValueError):
        compose(random_element(rng, 2), random_element(rng, 3))


def test_inverse_examples():
    e = inverse(GroupElement.identity(2))
    np.testing.assert_array_equal(embed(e), np.eye(8))
    p = np.array([1.0, -2.0, 0.5])
    z = np.zeros(3)
    inv = inverse(GroupElement(np.eye(3), p, z, z, np.zeros((1, 3))))
    np.testing.assert_array_equal(inv.x1, -p)
    rng = np.random.default_rng(3)
    a = random_element(rng, 3)
    np.testing.assert_allclose(embed(compose(inverse(a), a)), np.eye(9), atol=1e-12)
    np.testing.assert_allclose(embed(inverse(a)), np.linalg.inv(embed(a)), atol=1e-12)


@given(elements(), st.integers(0, 2 ** 32 - 1))
def test_closure_inverse_associativity(a, seed):
    rng = np.random.default_rng(seed)
    b, c = random_element(rng, a.n), random_element(rng, a.n)
    np.testing.assert_allclose(embed(compose(a, b)), embed(a) @ embed(b), atol=1e-12)
    I = np.eye(6 + a.n)
    np.testing.assert_allclose(embed(compose(a, inverse(a))), I, atol=1e-12)
    np.testing.assert_allclose(embed(compose(inverse(a), a)), I, atol=1e-12)
    np.testing.assert_allclose(embed(compose(compose(a, b), c)), embed(compose(a, compose(b, c))),
                               atol=1e-11)


@given(elements())
def test_embedding_structure(a):
    X = embed(a)
    k = 3 + a.n
    np.testing.assert_array_equal(X[3:, :3], 0)
    np.testing.assert_array_equal(X[3:, 3:], np.eye(k))
    back = from_matrix(X)
    np.testing.assert_array_equal(back.columns(), a.columns())


def test_group_element_is_immutable():
    a = GroupElement.identity(2)
    with pytest.raises(ValueError):
        a.x1[0] = 1.0


def test_tangent_embedding_structure():
    rng = np.random.default_rng(4)
    v = TangentElement(rng.normal(size=3), *rng.normal(size=(3, 3)), rng.normal(size=(4, 3)))
    V = embed_tangent(v)
    assert V.shape == (10, 10)
    np.testing.assert_array_equal(V[3:], 0)
    np.testing.assert_array_equal(V[:3, :3], skew(v.w))


# -- bracket and structure matrices ---------------------------------------------

def test_lie_bracket_examples(rng):
    A = rng.normal(size=(5, 5))
    np.testing.assert_array_equal(lie_bracket(A, A), 0)
    np.testing.assert_allclose(lie_bracket(A, np.eye(5)), 0, atol=1e-15)
    with pytest.raises(ValueError):
        lie_bracket(A, np.eye(4))


def test_bracket_with_shift_matrix_extracts_velocity_and_gravity(rng):
    n = 3
    X = random_element(rng, n)
    H = struct_matrices(n).H
    B = lie_bracket(embed(X), H)
    expected = np.zeros((6 + n, 6 + n))
    expected[:3, 3] = X.x2
    expected[:3, 4] = X.x3
    np.testing.assert_allclose(B, expected, atol=1e-14)


def test_struct_matrices_layout():
    n = 4
    sm = struct_matrices(n)
    assert np.count_nonzero(sm.S) == 2
    assert sm.S[1, 0] == 1 and sm.S[2, 1] == 1
    assert np.count_nonzero(sm.S_r) == n + 1
    np.testing.assert_array_equal(sm.S_r[0, 2:], 1)
    assert sm.S_r[1, 0] == 1
    np.testing.assert_array_equal(sm.Q, np.hstack([np.eye(3), np.zeros((3, 3 + n))]))
    assert sm.H.shape == (10, 10) and sm.H_r.shape == (9, 9)
    for i in range(n):
        np.testing.assert_array_equal(sm.r_vectors[:, i], landmark_vector(n, i))
    with pytest.raises(ValueError):
        struct_matrices(0)


def test_landmark_vector_bounds():
    r = landmark_vector(3, 1)
    np.testing.assert_array_equal(r, [0, 0, 0, -1, 0, 0, 0, 1, 0])
    with pytest.raises(IndexError):
        landmark_vector(3, 3)


def test_measurement_examples():
    X = GroupElement.identity(2)
    np.testing.assert_array_equal(group_action_measure(inverse(X), 0), landmark_vector(2, 0))
    z = np.zeros(3)
    X = GroupElement(np.eye(3), [1.0, 0, 0], z, z, np.zeros((1, 3)))
    np.testing.assert_array_equal(group_action_measure(inverse(X), 0)[:3], [1, 0, 0])
    with pytest.raises(IndexError):
        group_action_measure(inverse(X), 1)


@given(elements(n=5), st.integers(0, 4))
def test_measurement_identity(X, i):
    m = group_action_measure(inverse(X), i)
    dense = np.linalg.inv(embed(X)) @ landmark_vector(5, i)
    np.testing.assert_allclose(m, dense, atol=1e-11)
    np.testing.assert_allclose(m[:3], X.r.T @ (X.x1 - X.xL[i]), atol=1e-12)
    np.testing.assert_array_equal(m[3:], landmark_vector(5, i)[3:])
