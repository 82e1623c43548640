import math

import numpy as np
import pytest

from obscal.so3 import Rotation, rotation_from_rpy
from obscal.trajectory import make_trajectory_1, make_trajectory_2, sample
from obscal.sensors import (
    GRAVITY,
    CameraModel,
    FeatureEnvelope,
    FeatureGenerationError,
    FeatureMap,
    ImuNoise,
    generate_features,
    generate_imu,
    observe_features,
    observe_global_pose,
    point_in_camera,
)

W1 = math.pi / 5.0
P_CI = np.array([0.02, -0.01, 0.03])


class TestImu:
    def test_row_count_matches_rate_times_duration(self):
        imu = generate_imu(make_trajectory_2(), 400.0, duration=60.0)
        assert len(imu) == 24000

    def test_zero_noise_straight_line_gyro_silent(self):
        imu = generate_imu(make_trajectory_2(), 100.0)
        assert np.abs(imu.omega).max() == 0.0

    def test_zero_noise_constant_velocity_gravity_only(self):
        # horizontal constant-velocity line: specific force is -g, constant
        imu = generate_imu(make_trajectory_2(), 100.0)
        np.testing.assert_allclose(imu.accel, np.tile(-GRAVITY, (len(imu), 1)),
                                   atol=1e-14)

    def test_zero_noise_sinusoid_matches_second_derivative(self):
        imu = generate_imu(make_trajectory_1(), 200.0)
        expected = -2.0 * W1 * W1 * np.cos(W1 * imu.t)
        # x-axis: gravity has no component, so accel_x is the trajectory accel
        np.testing.assert_allclose(imu.accel[:, 0], expected, atol=1e-12)

    def test_bias_enters_measurement(self):
        bg = np.array([0.01, -0.02, 0.03])
        ba = np.array([0.1, 0.2, -0.3])
        imu = generate_imu(make_trajectory_2(), 50.0, bias=(bg, ba))
        np.testing.assert_allclose(imu.omega[0], bg)
        np.testing.assert_allclose(imu.accel[0], -GRAVITY + ba)

    def test_deterministic_given_seed(self):
        kw = dict(rate=200.0, noise=ImuNoise(), seed=42)
        a = generate_imu(make_trajectory_1(), **kw)
        b = generate_imu(make_trajectory_1(), **kw)
        assert np.array_equal(a.omega, b.omega)
        assert np.array_equal(a.accel, b.accel)

    def test_noise_statistics(self):
        noise = ImuNoise(gyro_density=1.7e-4, accel_density=2e-3,
                         gyro_walk=0.0, accel_walk=0.0)
        rate = 400.0
        imu = generate_imu(make_trajectory_2(), rate, noise=noise, seed=3)
        sg = imu.omega.std(axis=0)
        sa = (imu.accel - imu.accel.mean(axis=0)).std(axis=0)
        assert np.abs(sg / (1.7e-4 * math.sqrt(rate)) - 1.0).max() < 0.05
        assert np.abs(sa / (2e-3 * math.sqrt(rate)) - 1.0).max() < 0.05

    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            generate_imu(make_trajectory_2(), 0.0)


class TestFeatureGeneration:
    def test_requested_count_and_visibility(self):
        spec = make_trajectory_2()
        env = FeatureEnvelope(extrinsic_translation=P_CI)
        fmap = generate_features(spec, 50, env, seed=1)
        assert len(fmap) == 50
        times = np.arange(0.0, spec.duration + 1e-9, 1.0)
        cam = env.camera
        for f in range(len(fmap)):
            views = 0
            for t in times:
                kin = sample(spec, float(t))
                pc = point_in_camera(fmap.positions[f], kin,
                                     env.extrinsic_rotation, P_CI)
                views += cam.in_view(pc)
            assert views >= env.min_views

    def test_zero_count_empty_map(self):
        fmap = generate_features(make_trajectory_2(), 0, FeatureEnvelope(), seed=1)
        assert len(fmap) == 0

    def test_same_seed_bit_identical(self):
        env = FeatureEnvelope()
        a = generate_features(make_trajectory_1(), 20, env, seed=9)
        b = generate_features(make_trajectory_1(), 20, env, seed=9)
        assert np.array_equal(a.positions, b.positions)

    def test_infeasible_envelope_raises(self):
        with pytest.raises(FeatureGenerationError):
            generate_features(make_trajectory_2(), 5,
                              FeatureEnvelope(depth_min=5.0, depth_max=1.0))
        with pytest.raises(FeatureGenerationError):
            # no placement can reach near-90-degree parallax here
            generate_features(make_trajectory_2(), 5,
                              FeatureEnvelope(min_parallax_deg=89.0),
                              max_tries_per_feature=25)


class TestObserveFeatures:
    def test_on_axis_feature_projects_to_origin(self):
        spec = make_trajectory_2()
        kin = sample(spec, 0.0)
        # feature 2 m along the optical axis of the camera
        r_gc = kin.R_IG.matrix.T @ Rotation.identity().matrix.T
        center = kin.p - kin.R_IG.matrix.T @ (Rotation.identity().matrix.T @ np.zeros(3))
        p_f = center + r_gc @ np.array([0.0, 0.0, 2.0])
        fmap = FeatureMap(np.array([p_f]), 0, FeatureEnvelope())
        obs = observe_features(fmap, kin, Rotation.identity(), np.zeros(3), 0.0)
        assert len(obs) == 1
        np.testing.assert_allclose(obs[0].bearing, [0.0, 0.0], atol=1e-15)

    def test_feature_behind_camera_skipped(self):
        spec = make_trajectory_2()
        kin = sample(spec, 0.0)
        p_f = kin.p + np.array([0.0, 0.0, -5.0])    # opposite the optical axis
        fmap = FeatureMap(np.array([p_f]), 0, FeatureEnvelope())
        assert observe_features(fmap, kin, Rotation.identity(), np.zeros(3), 0.0) == []

    def test_zero_noise_roundtrip(self):
        spec = make_trajectory_1()
        r_ci = rotation_from_rpy((0.0, -45.0, -45.0))
        env = FeatureEnvelope(extrinsic_rotation=r_ci, extrinsic_translation=P_CI)
        fmap = generate_features(spec, 20, env, seed=4)
        kin = sample(spec, 12.3)
        for obs in observe_features(fmap, kin, r_ci, P_CI, 0.0):
            pc = point_in_camera(fmap.positions[obs.feature_id], kin, r_ci, P_CI)
            np.testing.assert_allclose(obs.bearing, pc[:2] / pc[2], atol=1e-12)

    def test_noise_deterministic_with_seed(self):
        spec = make_trajectory_1()
        env = FeatureEnvelope(extrinsic_translation=P_CI)
        fmap = generate_features(spec, 20, env, seed=4)
        kin = sample(spec, 3.0)
        a = observe_features(fmap, kin, Rotation.identity(), P_CI, 1e-3, rng=7)
        b = observe_features(fmap, kin, Rotation.identity(), P_CI, 1e-3, rng=7)
        assert all(np.array_equal(x.bearing, y.bearing) for x, y in zip(a, b))


class TestGlobalPose:
    def test_zero_noise_exact(self):
        kin = sample(make_trajectory_1(), 7.7)
        obs = observe_global_pose(kin, 0.0, 0.0)
        np.testing.assert_allclose(obs.p_meas, kin.p)
        np.testing.assert_allclose(obs.R_meas.matrix, kin.R_IG.matrix, atol=1e-15)

    def test_position_noise_statistics(self):
        kin = sample(make_trajectory_2(), 1.0)
        rng = np.random.default_rng(12)
        draws = np.array([observe_global_pose(kin, 0.1, 0.0, rng).p_meas - kin.p
                          for _ in range(10_000)])
        std = draws.std(axis=0)
        assert np.abs(std / 0.1 - 1.0).max() < 0.05

    def test_orientation_noise_statistics(self):
        kin = sample(make_trajectory_2(), 1.0)
        rng = np.random.default_rng(13)
        errs = []
        for _ in range(10_000):
            obs = observe_global_pose(kin, 0.0, 0.1, rng)
            rel = obs.R_meas @ kin.R_IG.inverse()
            errs.append(rel.log())
        std = np.array(errs).std(axis=0)
        assert np.abs(std / 0.1 - 1.0).max() < 0.05

    def test_negative_sigma_rejected(self):
        kin = sample(make_trajectory_2(), 0.0)
        with pytest.raises(ValueError):
            observe_global_pose(kin, -0.1, 0.0)


def test_camera_model_fov_gate():
    cam = CameraModel(fov_deg=90.0)
    assert cam.in_view(np.array([0.5, 0.5, 1.0]))
    assert not cam.in_view(np.array([1.5, 0.0, 1.0]))
    assert not cam.in_view(np.array([0.0, 0.0, -1.0]))
