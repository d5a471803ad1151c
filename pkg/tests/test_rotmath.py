import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pvred import rotmath as rm
from pvred._kernels import SMALL_ANGLE
from pvred.errors import InvalidInputError, ShapeError


def rodrigues_oracle(e):
    """Straight-line Rodrigues formula, independent of the library kernels."""
    e = np.asarray(e, dtype=float)
    theta = np.linalg.norm(e)
    if theta == 0:
        return np.eye(3)
    k = e / theta
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * K @ K


def random_axis_angles(count, seed, max_norm=np.pi):
    rng = np.random.default_rng(seed)
    axes = rng.normal(size=(count, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    return axes * rng.uniform(0, max_norm, size=(count, 1))


finite_vec3 = arrays(np.float64, 3, elements=st.floats(-10, 10, allow_nan=False))


class TestExpmapToQuat:
    @pytest.mark.parametrize(
        "e, q",
        [
            ((0, 0, 0), (1, 0, 0, 0)),
            ((np.pi, 0, 0), (0, 1, 0, 0)),
            ((0, np.pi, 0), (0, 0, 1, 0)),
        ],
    )
    def test_fixed_values(self, e, q):
        np.testing.assert_allclose(rm.expmap_to_quat(e), q, atol=1e-15)

    def test_derived_value_matches_rodrigues(self):
        e = np.array([0.3, -0.4, 1.2])
        q = rm.expmap_to_quat(e)
        np.testing.assert_allclose(rm.quat_to_rotmat(q), rodrigues_oracle(e), atol=1e-9)
        # frozen from the closed form cos(r/2), sin(r/2) e / r with r = 1.3
        np.testing.assert_allclose(q, [0.7960837985490559, 0.1396584013, -0.1862112018, 0.5586336053], atol=1e-9)

    def test_batch_broadcast(self):
        e = random_axis_angles(12, 0).reshape(3, 4, 3)
        q = rm.expmap_to_quat(e)
        assert q.shape == (3, 4, 4)
        np.testing.assert_array_equal(q[1, 2], rm.expmap_to_quat(e[1, 2]))

    @given(finite_vec3)
    @settings(max_examples=200, deadline=None)
    def test_unit_norm(self, e):
        assert abs(np.linalg.norm(rm.expmap_to_quat(e)) - 1.0) < 1e-9

    def test_branch_jump_at_threshold(self):
        axis = np.array([0.6, -0.8, 0.0])
        below = rm.expmap_to_quat(axis * np.nextafter(SMALL_ANGLE, 0))
        at = rm.expmap_to_quat(axis * SMALL_ANGLE)
        assert np.max(np.abs(below - at)) < 1e-10

    def test_branch_continuity_first_order(self):
        # straddle the threshold; what remains after the linear change is the jump plus O(step^2)
        axis = np.array([0.6, -0.8, 0.0])
        lo, hi = axis * (SMALL_ANGLE - 1e-9), axis * (SMALL_ANGLE + 1e-9)
        linear = rm.expmap_to_quat_jacobian(axis * SMALL_ANGLE) @ (hi - lo)
        residual = rm.expmap_to_quat(hi) - rm.expmap_to_quat(lo) - linear
        assert np.max(np.abs(residual)) < 1e-10

    @pytest.mark.parametrize("bad", [(np.nan, 0, 0), (0, np.inf, 0)])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(InvalidInputError):
            rm.expmap_to_quat(bad)

    def test_wrong_width_rejected(self):
        with pytest.raises(ShapeError):
            rm.expmap_to_quat([1.0, 2.0])


class TestJacobian:
    def test_zero(self):
        J = rm.expmap_to_quat_jacobian([0, 0, 0])
        np.testing.assert_array_equal(J[0], 0)
        np.testing.assert_allclose(J[1:], 0.5 * np.eye(3))

    def test_half_turn(self):
        J = rm.expmap_to_quat_jacobian([np.pi, 0, 0])
        np.testing.assert_allclose(J[0], [-0.5, 0, 0], atol=1e-15)
        np.testing.assert_allclose(J[1:], np.diag([0, 1 / np.pi, 1 / np.pi]), atol=1e-15)

    @pytest.mark.parametrize("norm", [1e-7, 1e-3, 1.0, np.pi])
    def test_matches_finite_differences(self, norm):
        e = norm * np.array([0.48, -0.6, 0.64])
        h = 1e-6
        fd = np.stack(
            [(rm.expmap_to_quat(e + h * u) - rm.expmap_to_quat(e - h * u)) / (2 * h) for u in np.eye(3)], axis=1
        )
        assert np.max(np.abs(rm.expmap_to_quat_jacobian(e) - fd)) < 1e-6

    def test_thousand_samples(self):
        e = random_axis_angles(1000, 3)
        e[:4] = np.array([0.48, -0.6, 0.64]) * np.array([1e-7, 1e-3, 1.0, np.pi])[:, None]
        h = 1e-6
        fd = np.stack(
            [(rm.expmap_to_quat(e + h * u) - rm.expmap_to_quat(e - h * u)) / (2 * h) for u in np.eye(3)], axis=-1
        )
        assert np.max(np.abs(rm.expmap_to_quat_jacobian(e) - fd)) < 1e-6

    def test_branch_jump_at_threshold(self):
        axis = np.array([0.0, 0.6, 0.8])
        below = rm.expmap_to_quat_jacobian(axis * np.nextafter(SMALL_ANGLE, 0))
        at = rm.expmap_to_quat_jacobian(axis * SMALL_ANGLE)
        assert np.max(np.abs(below - at)) < 1e-10

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInputError):
            rm.expmap_to_quat_jacobian([np.nan, 0, 0])


class TestRotations:
    @pytest.mark.parametrize(
        "q, R",
        [((1, 0, 0, 0), np.eye(3)), ((0, 1, 0, 0), np.diag([1.0, -1.0, -1.0]))],
    )
    def test_quat_to_rotmat_fixed(self, q, R):
        np.testing.assert_allclose(rm.quat_to_rotmat(q), R, atol=1e-15)

    def test_quat_to_rotmat_is_proper(self):
        rng = np.random.default_rng(1)
        q = rng.normal(size=(200, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        R = rm.quat_to_rotmat(q)
        eye = np.broadcast_to(np.eye(3), R.shape)
        np.testing.assert_allclose(np.swapaxes(R, -1, -2) @ R, eye, atol=1e-9)
        np.testing.assert_allclose(np.linalg.det(R), 1.0, atol=1e-9)

    def test_quat_norm_checked(self):
        with pytest.raises(InvalidInputError):
            rm.quat_to_rotmat([1.0, 0.1, 0, 0])

    def test_round_trip_thousand(self):
        e = random_axis_angles(1000, 0)
        R = rm.quat_to_rotmat(rm.expmap_to_quat(e))
        oracle = np.stack([rodrigues_oracle(v) for v in e])
        np.testing.assert_allclose(R, oracle, atol=1e-9)
        np.testing.assert_allclose(rm.expmap_to_rotmat(e), oracle, atol=1e-9)

    def test_rotmat_tiny_angle(self):
        e = np.array([1e-8, -2e-8, 3e-9])
        np.testing.assert_allclose(rm.expmap_to_rotmat(e), rodrigues_oracle(e), atol=1e-15)


class TestEuler:
    def test_zero(self):
        np.testing.assert_array_equal(rm.expmap_to_euler([0, 0, 0]), [0, 0, 0])

    def test_z_quarter_turn(self):
        np.testing.assert_allclose(rm.expmap_to_euler([0, 0, np.pi / 2]), [np.pi / 2, 0, 0], atol=1e-12)

    @pytest.mark.parametrize("axis, index", [((1, 0, 0), 2), ((0, 1, 0), 1), ((0, 0, 1), 0)])
    def test_single_axis(self, axis, index):
        angles = rm.expmap_to_euler(0.7 * np.asarray(axis, float))
        expected = np.zeros(3)
        expected[index] = 0.7
        np.testing.assert_allclose(angles, expected, atol=1e-12)

    def test_reconstruction(self):
        e = random_axis_angles(1000, 5)
        R = rm.expmap_to_rotmat(e)
        far = np.abs(R[:, 2, 0]) < 1 - 1e-6
        rebuilt = rm.euler_to_rotmat(rm.expmap_to_euler(e[far]))
        np.testing.assert_allclose(rebuilt, R[far], atol=1e-9)

    @pytest.mark.parametrize("pitch", [np.pi / 2, -np.pi / 2])
    def test_gimbal_lock_convention(self, pitch):
        R = rm.euler_to_rotmat([0.4, pitch, -0.9])
        angles = rm.rotmat_to_euler(R)
        assert angles[2] == 0.0
        np.testing.assert_allclose(angles[1], pitch, atol=1e-7)
        np.testing.assert_allclose(rm.euler_to_rotmat(angles), R, atol=1e-7)

    @given(finite_vec3)
    @settings(max_examples=200, deadline=None)
    def test_range(self, e):
        angles = rm.expmap_to_euler(e)
        assert np.all(angles > -np.pi) and np.all(angles <= np.pi)


class TestWrapAngle:
    @pytest.mark.parametrize(
        "theta, expected", [(0.0, 0.0), (np.pi, np.pi), (-np.pi, np.pi), (3 * np.pi / 2, -np.pi / 2), (2 * np.pi, 0.0)]
    )
    def test_values(self, theta, expected):
        assert rm.wrap_angle(theta) == pytest.approx(expected, abs=1e-12)

    @given(st.floats(-50, 50))
    def test_range_and_equivalence(self, theta):
        w = rm.wrap_angle(theta)
        assert -np.pi < w <= np.pi
        assert np.isclose(np.cos(w), np.cos(theta), atol=1e-9) and np.isclose(np.sin(w), np.sin(theta), atol=1e-9)


class TestPoseQt:
    def test_zero_pose(self):
        np.testing.assert_array_equal(rm.pose_qt(np.zeros(6)), [1, 0, 0, 0, 1, 0, 0, 0])

    def test_single_joint(self):
        np.testing.assert_allclose(rm.pose_qt([np.pi, 0, 0]), [0, 1, 0, 0], atol=1e-15)

    def test_matches_per_joint(self):
        x = np.random.default_rng(2).normal(size=6)
        expected = np.concatenate([rm.expmap_to_quat(x[:3]), rm.expmap_to_quat(x[3:])])
        np.testing.assert_array_equal(rm.pose_qt(x), expected)

    def test_bad_length(self):
        with pytest.raises(ShapeError):
            rm.pose_qt(np.zeros(5))


class TestPoseQtBackward:
    def test_zero_upstream(self):
        x = np.random.default_rng(0).normal(size=9)
        np.testing.assert_array_equal(rm.pose_qt_backward(x, np.zeros(12)), 0)

    def test_small_angle(self):
        np.testing.assert_allclose(rm.pose_qt_backward(np.zeros(3), [0, 1, 0, 0]), [0.5, 0, 0])

    def test_finite_differences(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=6)
        up = rng.normal(size=8)
        h = 1e-6
        fd = np.array([(up @ rm.pose_qt(x + h * u) - up @ rm.pose_qt(x - h * u)) / (2 * h) for u in np.eye(6)])
        np.testing.assert_allclose(rm.pose_qt_backward(x, up), fd, atol=1e-8)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            rm.pose_qt_backward(np.zeros(6), np.zeros(4))
