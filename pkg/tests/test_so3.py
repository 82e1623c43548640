import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation as ScipyRotation

from obscal.so3 import (
    Rotation,
    Rpy,
    right_jacobian,
    rotation_error_rpy,
    rotation_from_rpy,
    rpy_from_rotation,
    skew,
)

angles = st.floats(-180.0, 180.0, allow_nan=False)
unit_floats = st.floats(-1.0, 1.0, allow_nan=False)


def random_rotation(rng):
    return Rotation.exp(rng.normal(size=3))


class TestSkew:
    def test_zero_vector(self):
        assert np.array_equal(skew([0.0, 0.0, 0.0]), np.zeros((3, 3)))

    def test_cross_product_identity(self):
        np.testing.assert_allclose(skew([1, 0, 0]) @ [0, 1, 0], [0, 0, 1])

    def test_self_cross_is_zero(self):
        v = np.array([0.3, -1.2, 2.5])
        np.testing.assert_allclose(skew(v) @ v, np.zeros(3), atol=1e-15)

    def test_antisymmetry(self):
        v = np.array([0.7, -0.2, 1.9])
        np.testing.assert_allclose(skew(v).T, -skew(v))

    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=3),
           st.lists(st.floats(-10, 10), min_size=3, max_size=3),
           st.floats(-5, 5), st.floats(-5, 5))
    def test_linearity(self, u, v, a, b):
        u, v = np.array(u), np.array(v)
        lhs = skew(a * u + b * v)
        rhs = a * skew(u) + b * skew(v)
        assert np.abs(lhs - rhs).max() < 1e-14 * max(1.0, np.abs(rhs).max())

    @given(st.lists(st.floats(-3, 3), min_size=3, max_size=3),
           st.lists(st.floats(-3, 3), min_size=3, max_size=3))
    def test_matches_cross(self, v, w):
        v, w = np.array(v), np.array(w)
        np.testing.assert_allclose(skew(v) @ w, np.cross(v, w), atol=1e-12)


class TestRotation:
    def test_identity(self):
        r = Rotation.identity()
        np.testing.assert_allclose(r.matrix, np.eye(3))

    @given(st.lists(unit_floats, min_size=3, max_size=3), st.floats(1e-4, 3.0))
    @settings(max_examples=50)
    def test_exp_map_orthonormal(self, axis, angle):
        axis = np.array(axis)
        n = np.linalg.norm(axis)
        if n < 1e-3:
            return
        r = Rotation.exp(axis / n * angle)
        np.testing.assert_allclose(r.matrix.T @ r.matrix, np.eye(3), atol=1e-12)
        assert abs(np.linalg.det(r.matrix) - 1.0) < 1e-12

    def test_unit_norm_after_many_compositions(self):
        rng = np.random.default_rng(0)
        r = Rotation.identity()
        for _ in range(2000):
            r = r @ Rotation.exp(rng.normal(size=3) * 0.1)
            assert abs(np.linalg.norm(r.q) - 1.0) < 1e-12

    def test_exp_log_roundtrip(self):
        # log returns the wrapped rotation vector, so stay inside |phi| < pi
        rng = np.random.default_rng(1)
        for _ in range(20):
            phi = rng.normal(size=3)
            phi *= rng.uniform(0.0, 3.1) / np.linalg.norm(phi)
            np.testing.assert_allclose(Rotation.exp(phi).log(), phi, atol=1e-12)

    def test_from_matrix_roundtrip(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            r = random_rotation(rng)
            r2 = Rotation.from_matrix(r.matrix)
            np.testing.assert_allclose(r2.matrix, r.matrix, atol=1e-12)

    def test_compose_matches_matrix_product(self):
        rng = np.random.default_rng(3)
        a, b = random_rotation(rng), random_rotation(rng)
        np.testing.assert_allclose((a @ b).matrix, a.matrix @ b.matrix, atol=1e-13)

    def test_inverse(self):
        rng = np.random.default_rng(4)
        r = random_rotation(rng)
        np.testing.assert_allclose((r @ r.inverse()).matrix, np.eye(3), atol=1e-13)


class TestRpy:
    def test_zero_is_identity(self):
        np.testing.assert_allclose(rotation_from_rpy((0, 0, 0)).matrix, np.eye(3))

    def test_quarter_turn_about_z(self):
        r = rotation_from_rpy((0.0, 0.0, 90.0))
        np.testing.assert_allclose(r.apply([1, 0, 0]), [0, 1, 0], atol=1e-15)

    def test_documented_roundtrip(self):
        rpy = Rpy(2.0, -4.0, -5.0)
        back = rpy_from_rotation(rotation_from_rpy(rpy))
        np.testing.assert_allclose(back.as_array(), rpy.as_array(), atol=1e-9)

    @given(angles, st.floats(-89.0, 89.0, allow_nan=False), angles)
    @settings(max_examples=100)
    def test_roundtrip_away_from_gimbal(self, roll, pitch, yaw):
        back = rpy_from_rotation(rotation_from_rpy((roll, pitch, yaw)))
        err = np.abs(back.as_array() - [roll, pitch, yaw])
        err = np.minimum(err, 360.0 - err)   # wrap at +/-180
        assert err.max() < 1e-9

    def test_matches_scipy_convention(self):
        # independent oracle for the intrinsic Z-Y-X (yaw, pitch, roll) order
        rng = np.random.default_rng(5)
        for _ in range(25):
            rpy = rng.uniform(-80, 80, size=3)
            ours = rotation_from_rpy(rpy).matrix
            theirs = ScipyRotation.from_euler(
                "ZYX", [rpy[2], rpy[1], rpy[0]], degrees=True).as_matrix()
            np.testing.assert_allclose(ours, theirs, atol=1e-12)


class TestRotationError:
    def test_identity_case(self):
        rng = np.random.default_rng(6)
        r = random_rotation(rng)
        np.testing.assert_allclose(rotation_error_rpy(r, r).as_array(),
                                   np.zeros(3), atol=1e-7)

    def test_constructed_perturbation(self):
        rng = np.random.default_rng(7)
        r_true = random_rotation(rng)
        r_est = rotation_from_rpy((1.0, 0.0, 0.0)) @ r_true
        err = rotation_error_rpy(r_est, r_true)
        np.testing.assert_allclose(err.as_array(), [1.0, 0.0, 0.0], atol=1e-9)

    def test_against_independent_euler_extraction(self):
        # oracle: extract angles from the relative matrix with scipy
        rng = np.random.default_rng(8)
        for _ in range(25):
            r_est, r_true = random_rotation(rng), random_rotation(rng)
            ours = rotation_error_rpy(r_est, r_true).as_array()
            rel = r_est.matrix @ r_true.matrix.T
            yaw, pitch, roll = ScipyRotation.from_matrix(rel).as_euler(
                "ZYX", degrees=True)
            np.testing.assert_allclose(ours, [roll, pitch, yaw], atol=1e-8)

    def test_zero_iff_equal(self):
        rng = np.random.default_rng(9)
        r_true = random_rotation(rng)
        r_est = rotation_from_rpy((0.01, 0.0, 0.0)) @ r_true
        assert np.abs(rotation_error_rpy(r_est, r_true).as_array()).max() > 1e-3


class TestRightJacobian:
    def test_identity_at_zero(self):
        np.testing.assert_allclose(right_jacobian(np.zeros(3)), np.eye(3))

    def test_finite_difference_oracle(self):
        # R(t) = exp(skew(phi0 + t v)): body rate must equal Jr(phi) v
        rng = np.random.default_rng(10)
        for _ in range(10):
            phi = rng.normal(size=3)
            v = rng.normal(size=3)
            h = 1e-6
            r0 = Rotation.exp(phi - h * v).matrix
            r1 = Rotation.exp(phi + h * v).matrix
            omega_hat = Rotation.exp(phi).matrix.T @ ((r1 - r0) / (2 * h))
            omega = np.array([omega_hat[2, 1], omega_hat[0, 2], omega_hat[1, 0]])
            np.testing.assert_allclose(right_jacobian(phi) @ v, omega,
                                       rtol=1e-5, atol=1e-7)


def test_rejects_degenerate_quaternion():
    with pytest.raises(ValueError):
        Rotation([0.0, 0.0, 0.0, 0.0])
