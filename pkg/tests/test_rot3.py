import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from gmr import rot3

finite = st.floats(-10.0, 10.0, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)
quat4 = st.tuples(finite, finite, finite, finite).map(np.array).filter(lambda q: np.linalg.norm(q) > 1e-3)


def scipy_quat(q):
    # scipy is (x, y, z, w)
    return np.concatenate([q[..., 1:], q[..., :1]], axis=-1)


def test_aa_to_mat_matches_scipy(rng):
    v = rng.normal(size=(500, 3)) * 2.0
    ref = Rotation.from_rotvec(v).as_matrix()
    np.testing.assert_allclose(rot3.aa_to_mat(v), ref, atol=1e-12)


def test_quat_to_mat_matches_scipy(rng):
    q = rot3.random_quats(500, rng)
    ref = Rotation.from_quat(scipy_quat(q)).as_matrix()
    np.testing.assert_allclose(rot3.quat_to_mat(q), ref, atol=1e-12)


def test_mat_to_aa_matches_scipy(rng):
    m = rot3.random_rotations(500, rng)
    ref = Rotation.from_matrix(m).as_rotvec()
    np.testing.assert_allclose(rot3.mat_to_aa(m), ref, atol=1e-10)


def test_round_trips(rng):
    m = rot3.random_rotations(2000, rng)
    q = rot3.mat_to_quat(m)
    np.testing.assert_allclose(rot3.quat_to_mat(q), m, atol=1e-12)
    np.testing.assert_allclose(rot3.aa_to_mat(rot3.mat_to_aa(m)), m, atol=1e-12)
    np.testing.assert_allclose(rot3.sixd_to_mat(rot3.mat_to_sixd(m)), m, atol=1e-12)
    np.testing.assert_allclose(rot3.aa_to_quat(rot3.quat_to_aa(q)), q, atol=1e-12)


def test_identity_and_small_angles():
    np.testing.assert_array_equal(rot3.aa_to_mat(np.zeros(3)), np.eye(3))
    np.testing.assert_array_equal(rot3.mat_to_aa(np.eye(3)), np.zeros(3))
    v = np.array([1e-10, -2e-10, 3e-11])
    np.testing.assert_allclose(rot3.mat_to_aa(rot3.aa_to_mat(v)), v, rtol=1e-6, atol=1e-20)
    np.testing.assert_allclose(rot3.quat_to_aa(rot3.aa_to_quat(v)), v, rtol=1e-9)


@pytest.mark.parametrize("axis", [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, -1, 0], [0.3, 0.5, -0.8]])
def test_angle_pi_is_recovered(axis):
    k = np.asarray(axis, float) / np.linalg.norm(axis)
    for theta in (np.pi, np.pi - 1e-9, np.pi - 1e-4):
        m = rot3.aa_to_mat(k * theta)
        v = rot3.mat_to_aa(m)
        assert np.linalg.norm(v) == pytest.approx(theta, abs=1e-9)
        np.testing.assert_allclose(rot3.aa_to_mat(v), m, atol=1e-12)


def test_rz_pi_log():
    v = rot3.mat_to_aa(rot3.rz(np.pi))
    np.testing.assert_allclose(v, [0, 0, np.pi], atol=1e-12)


def test_canonical_quat_sign():
    q = rot3.canonical_quat(np.array([-0.5, 0.5, -0.5, 0.5]))
    assert q[0] > 0
    q = rot3.canonical_quat(np.array([0.0, -1.0, 0.0, 0.0]))
    np.testing.assert_array_equal(q, [0.0, 1.0, 0.0, 0.0])
    q = rot3.canonical_quat(np.array([0.0, 0.0, -0.6, 0.8]))
    np.testing.assert_allclose(q, [0.0, 0.0, 0.6, -0.8])


@settings(max_examples=200, deadline=None)
@given(quat4)
def test_quat_double_cover(q):
    np.testing.assert_allclose(rot3.quat_to_mat(q), rot3.quat_to_mat(-q), atol=1e-12)
    c = rot3.canonical_quat(q)
    np.testing.assert_allclose(rot3.canonical_quat(-q), c, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(vec3)
def test_wrap_aa_is_same_rotation_in_ball(v):
    w = rot3.wrap_aa(v)
    assert np.linalg.norm(w) <= np.pi + 1e-12
    np.testing.assert_allclose(rot3.aa_to_mat(w), rot3.aa_to_mat(v), atol=1e-10)


@settings(max_examples=200, deadline=None)
@given(vec3)
def test_log_lands_in_ball(v):
    a = rot3.mat_to_aa(rot3.aa_to_mat(v))
    assert np.linalg.norm(a) <= np.pi + 1e-12
    np.testing.assert_allclose(rot3.aa_to_mat(a), rot3.aa_to_mat(v), atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.tuples(*[finite] * 6).map(np.array))
def test_sixd_projects_to_rotation(s):
    try:
        m = rot3.sixd_to_mat(s)
    except rot3.Degenerate6D:
        return
    rot3.check_rotation(m, tol=1e-10)
    np.testing.assert_allclose(m[:, 0], s[:3] / np.linalg.norm(s[:3]), atol=1e-12)


def test_sixd_degenerate():
    with pytest.raises(rot3.Degenerate6D):
        rot3.sixd_to_mat(np.array([1.0, 0, 0, 2.0, 0, 0]))
    with pytest.raises(rot3.Degenerate6D):
        rot3.sixd_to_mat(np.array([0.0, 0, 0, 0, 1, 0]))


def test_invalid_inputs():
    with pytest.raises(rot3.InvalidInput):
        rot3.aa_to_mat(np.array([np.nan, 0, 0]))
    with pytest.raises(rot3.InvalidInput):
        rot3.aa_to_mat(np.zeros(4))
    with pytest.raises(rot3.InvalidInput):
        rot3.canonical_quat(np.zeros(4))
    with pytest.raises(rot3.InvalidRotation):
        rot3.mat_to_aa(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(rot3.InvalidRotation):
        rot3.mat_to_quat(2.0 * np.eye(3))


def test_chordal_geodesic_identity(rng):
    m1 = rot3.random_rotations(1000, rng)
    m2 = rot3.random_rotations(1000, rng)
    theta = rot3.geodesic_angle(m1, m2)
    chord = np.linalg.norm(m1 - m2, axis=(-2, -1))
    np.testing.assert_allclose(chord, 2 * np.sqrt(2) * np.sin(theta / 2), atol=1e-12)


def test_geodesic_matches_scipy(rng):
    m1 = rot3.random_rotations(300, rng)
    m2 = rot3.random_rotations(300, rng)
    ref = (Rotation.from_matrix(m2) * Rotation.from_matrix(m1).inv()).magnitude()
    np.testing.assert_allclose(rot3.geodesic_angle(m1, m2), ref, atol=1e-10)


def test_quat_mul_matches_matrix_product(rng):
    p, q = rot3.random_quats(100, rng), rot3.random_quats(100, rng)
    np.testing.assert_allclose(
        rot3.quat_to_mat(rot3.quat_mul(p, q)), rot3.quat_to_mat(p) @ rot3.quat_to_mat(q), atol=1e-12
    )


def test_skew_vee(rng):
    v, u = rng.normal(size=(10, 3)), rng.normal(size=(10, 3))
    np.testing.assert_allclose((rot3.skew(v) @ u[..., None])[..., 0], np.cross(v, u), atol=1e-14)
    np.testing.assert_allclose(rot3.vee(rot3.skew(v)), v, atol=1e-15)


def test_random_rotations_are_uniform(rng):
    # Haar measure: E[trace] = 0 and angle density (1 - cos t) / pi
    m = rot3.random_rotations(20000, rng)
    assert abs(np.trace(m, axis1=1, axis2=2).mean()) < 0.05
    theta = rot3.rotation_angle(m)
    assert np.mean(theta) == pytest.approx(np.pi / 2 + 2 / np.pi, abs=0.02)
