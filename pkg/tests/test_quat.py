import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from egopose import quat


def random_unit_quats(n, seed=0):
    rng = np.random.Generator(np.random.PCG64(seed))
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def test_identity_rotates_nothing():
    v = np.array([1.0, 2.0, 3.0])
    assert np.allclose(quat.rotate(quat.IDENTITY, v), v)


def test_rotate_matches_scipy():
    # independent oracle: scipy stores (x, y, z, w)
    q = random_unit_quats(200, seed=3)
    v = np.random.Generator(np.random.PCG64(4)).normal(size=(200, 3))
    ours = quat.rotate(q, v)
    theirs = Rotation.from_quat(q[:, [1, 2, 3, 0]]).apply(v)
    np.testing.assert_allclose(ours, theirs, atol=1e-12)


def test_mul_matches_scipy_composition():
    a = random_unit_quats(50, seed=5)
    b = random_unit_quats(50, seed=6)
    ours = quat.mul(a, b)
    ra = Rotation.from_quat(a[:, [1, 2, 3, 0]])
    rb = Rotation.from_quat(b[:, [1, 2, 3, 0]])
    theirs = (ra * rb).as_quat()[:, [3, 0, 1, 2]]
    # quaternions are double covers: compare up to sign
    sign = np.sign(np.sum(ours * theirs, axis=-1, keepdims=True))
    np.testing.assert_allclose(ours, sign * theirs, atol=1e-12)


def test_conjugate_is_inverse():
    q = random_unit_quats(20, seed=7)
    prod = quat.mul(q, quat.conjugate(q))
    expected = np.tile(quat.IDENTITY, (20, 1))
    np.testing.assert_allclose(prod, expected, atol=1e-12)


def test_from_axis_angle_quarter_turn():
    q = quat.from_axis_angle(np.array([0.0, 0.0, 1.0]), np.pi / 2)
    v = quat.rotate(q, np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(v, [0.0, 1.0, 0.0], atol=1e-12)


def test_exp_map_matches_axis_angle():
    rng = np.random.Generator(np.random.PCG64(8))
    w = rng.normal(size=(100, 3))
    angle = np.linalg.norm(w, axis=-1)
    axis = w / angle[:, None]
    np.testing.assert_allclose(quat.exp_map(w),
                               quat.from_axis_angle(axis, angle), atol=1e-12)


def test_exp_map_small_angle_smooth():
    w = np.array([1e-12, 0.0, 0.0])
    q = quat.exp_map(w)
    assert np.isclose(q[0], 1.0)
    assert np.isclose(np.linalg.norm(q), 1.0)
    # derivative sanity: exp(w)/|w| -> 0.5 component slope near zero
    q2 = quat.exp_map(np.array([1e-6, 0.0, 0.0]))
    assert np.isclose(q2[1], 0.5e-6, rtol=1e-6)


def test_to_matrix_orthonormal_and_matches_rotate():
    q = random_unit_quats(50, seed=9)
    m = quat.to_matrix(q)
    eye = np.einsum("nij,nkj->nik", m, m)
    np.testing.assert_allclose(eye, np.tile(np.eye(3), (50, 1, 1)), atol=1e-12)
    v = np.random.Generator(np.random.PCG64(10)).normal(size=(50, 3))
    np.testing.assert_allclose(np.einsum("nij,nj->ni", m, v),
                               quat.rotate(q, v), atol=1e-12)


def test_normalize_rejects_nothing_but_scales():
    q = np.array([2.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(quat.normalize(q), quat.IDENTITY)


@pytest.mark.parametrize("axis", [[1, 0, 0], [0, 1, 0], [0, 0, 1]])
def test_full_turn_is_minus_identity(axis):
    q = quat.from_axis_angle(np.array(axis, dtype=float), 2 * np.pi)
    # 2*pi rotation returns -identity in quaternion space, identity as a map
    np.testing.assert_allclose(np.abs(q[0]), 1.0, atol=1e-12)
    v = np.array([0.3, -0.2, 0.9])
    np.testing.assert_allclose(quat.rotate(q, v), v, atol=1e-12)
