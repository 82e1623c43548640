import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from obscal.so3 import skew
from obscal.trajectory import (
    TrajectorySpec,
    make_generic_excitation,
    make_trajectory_1,
    make_trajectory_2,
    sample,
)

W1 = math.pi / 5.0


class TestTrajectory1:
    def test_start_position(self):
        assert np.allclose(sample(make_trajectory_1(), 0.0).p, [2.0, 0.0, 0.0])

    def test_half_period_position(self):
        # cos(pi) = -1 at t = 5
        assert np.allclose(sample(make_trajectory_1(), 5.0).p, [-2.0, 0.0, 0.0])

    def test_initial_derivatives(self):
        # differentiate 2 cos(w t): v(0) = 0, a(0) = -2 w^2
        k = sample(make_trajectory_1(), 0.0)
        np.testing.assert_allclose(k.v, np.zeros(3), atol=1e-15)
        np.testing.assert_allclose(k.a, [-2.0 * W1 * W1, 0.0, 0.0])

    def test_orientation_constant_identity(self):
        spec = make_trajectory_1()
        for t in np.linspace(0, spec.duration, 13):
            k = sample(spec, float(t))
            np.testing.assert_allclose(k.R_IG.matrix, np.eye(3), atol=1e-15)
            np.testing.assert_allclose(k.omega, np.zeros(3), atol=1e-15)


class TestTrajectory2:
    def test_position_linear(self):
        assert np.allclose(sample(make_trajectory_2(), 10.0).p, [5.0, 0.0, 0.0])
        assert np.allclose(sample(make_trajectory_2(), 60.0).p, [30.0, 0.0, 0.0])

    def test_velocity_constant(self):
        spec = make_trajectory_2()
        for t in (0.0, 7.3, 42.0, 60.0):
            np.testing.assert_allclose(sample(spec, t).v, [0.5, 0.0, 0.0])

    @given(st.floats(0.0, 60.0), st.floats(0.0, 60.0))
    @settings(max_examples=50)
    def test_constant_velocity_identity_exact(self, t1, tk):
        # p_k = p_1 + v_1 (t_k - t_1) holds exactly
        spec = make_trajectory_2()
        k1, kk = sample(spec, t1), sample(spec, tk)
        assert np.linalg.norm(kk.p - k1.p - k1.v * (tk - t1)) < 1e-12


class TestStraightLineConstraint:
    @pytest.mark.parametrize("maker", [make_trajectory_1, make_trajectory_2])
    def test_relative_position_parallel_to_axis(self, maker):
        spec = maker()
        k1 = sample(spec, 0.0)
        for tk in np.linspace(0.0, spec.duration, 200):
            kk = sample(spec, float(tk))
            rel_imu = k1.R_IG.matrix @ (kk.p - k1.p)
            assert np.abs(skew(rel_imu) @ spec.direction).max() < 1e-10


class TestGenericExcitation:
    def test_orientation_starts_at_identity(self):
        k = sample(make_generic_excitation(), 0.0)
        np.testing.assert_allclose(k.R_IG.matrix, np.eye(3), atol=1e-12)

    def test_not_a_straight_line(self):
        spec = make_generic_excitation()
        k1 = sample(spec, 0.0)
        worst = 0.0
        for tk in np.linspace(0.5, 10.0, 20):
            rel = k1.R_IG.matrix @ (sample(spec, float(tk)).p - k1.p)
            worst = max(worst, np.abs(skew(rel) @ spec.direction).max())
        assert worst > 0.1

    def test_angular_rate_spans_two_axes(self):
        spec = make_generic_excitation()
        omegas = np.array([sample(spec, float(t)).omega
                           for t in np.linspace(0.0, 10.0, 101)])
        s = np.linalg.svd(omegas, compute_uv=False)
        assert np.sum(s > 1e-3 * s[0]) >= 2

    def test_rate_consistent_with_orientation(self):
        # finite-difference the orientation profile and compare body rates
        spec = make_generic_excitation()
        h = 1e-6
        for t in (0.3, 2.7, 8.1):
            r0 = sample(spec, t - h).R_IG.matrix.T
            r1 = sample(spec, t + h).R_IG.matrix.T
            mid = sample(spec, t)
            omega_hat = mid.R_IG.matrix @ ((r1 - r0) / (2 * h))
            omega = np.array([omega_hat[2, 1], omega_hat[0, 2], omega_hat[1, 0]])
            np.testing.assert_allclose(mid.omega, omega, rtol=1e-5, atol=1e-8)


class TestSampling:
    @pytest.mark.parametrize("maker", [make_trajectory_1, make_trajectory_2,
                                       make_generic_excitation])
    def test_central_difference_velocity_acceleration(self, maker):
        spec = maker()
        h = 1e-4
        for t in np.linspace(1.0, 59.0, 10):
            t = float(t)
            pm, pp = sample(spec, t - h).p, sample(spec, t + h).p
            vm, vp = sample(spec, t - h).v, sample(spec, t + h).v
            k = sample(spec, t)
            v_num = (pp - pm) / (2 * h)
            a_num = (vp - vm) / (2 * h)
            assert np.abs(v_num - k.v).max() < 1e-6 * max(1.0, np.abs(k.v).max())
            assert np.abs(a_num - k.a).max() < 1e-6 * max(1.0, np.abs(k.a).max())

    def test_out_of_range_raises(self):
        spec = make_trajectory_2(duration=60.0)
        with pytest.raises(ValueError):
            sample(spec, -0.1)
        with pytest.raises(ValueError):
            sample(spec, 60.1)

    def test_straight_line_has_zero_rate(self):
        for maker in (make_trajectory_1, make_trajectory_2):
            k = sample(maker(), 31.4)
            assert np.array_equal(k.omega, np.zeros(3))


def test_direction_must_be_unit():
    with pytest.raises(ValueError):
        TrajectorySpec(
            kind="straight-line-constant-velocity",
            direction=np.array([1.0, 1.0, 0.0]),
            duration=1.0,
            position=lambda t: np.zeros(3),
            velocity=lambda t: np.zeros(3),
            acceleration=lambda t: np.zeros(3),
        )
