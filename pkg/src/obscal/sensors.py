"""Deterministic multi-sensor simulation along an analytic trajectory.

Measurement models:

- gyroscope:      w_m = w + b_g + n_g
- accelerometer:  a_m = R_IG (a - g) + b_a + n_a        (specific force)
- camera bearing: z = pinhole([x/z, y/z]) of  c_p = R_CI R_IG (p_f - p_I) + p_CI
- global pose:    p_meas = p + n_p,   R_meas = exp(-skew(n_th)) R_IG

All randomness flows through ``numpy.random.Generator`` seeded explicitly,
so identical seeds give bit-identical streams.  The camera is an ideal
pinhole in normalized image coordinates with a symmetric field of view;
intrinsics are deliberately outside the scope of the study.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .so3 import Rotation, skew
from .trajectory import TrajectorySpec, KinematicSample, sample

GRAVITY = np.array([0.0, 0.0, -9.81])


class FeatureGenerationError(RuntimeError):
    """Raised when no feature placement satisfies the visibility envelope."""


@dataclass(frozen=True)
class ImuSample:
    t: float
    omega: np.ndarray   # rad/s, measured
    accel: np.ndarray   # m/s^2, measured


@dataclass
class ImuBatch:
    """Column-array view of an IMU stream plus the generating ground truth."""

    t: np.ndarray            # (N,)
    omega: np.ndarray        # (N, 3) measured
    accel: np.ndarray        # (N, 3) measured
    bias_gyro: np.ndarray    # (N, 3) true bias trajectory
    bias_accel: np.ndarray   # (N, 3)
    rate: float

    def __len__(self) -> int:
        return self.t.shape[0]

    def __getitem__(self, i: int) -> ImuSample:
        return ImuSample(float(self.t[i]), self.omega[i], self.accel[i])


@dataclass(frozen=True)
class ImuNoise:
    """Continuous-time white-noise densities and bias random-walk intensities.

    Units: rad/s/sqrt(Hz), m/s^2/sqrt(Hz), rad/s^2/sqrt(Hz), m/s^3/sqrt(Hz).
    """

    gyro_density: float = 1.7e-4
    accel_density: float = 2.0e-3
    gyro_walk: float = 2.0e-5
    accel_walk: float = 3.0e-3

    @staticmethod
    def zero() -> "ImuNoise":
        return ImuNoise(0.0, 0.0, 0.0, 0.0)


def generate_imu(spec: TrajectorySpec,
                 rate: float,
                 bias: tuple = (np.zeros(3), np.zeros(3)),
                 noise: ImuNoise = ImuNoise.zero(),
                 seed=0,
                 gravity: np.ndarray = GRAVITY,
                 duration: float | None = None) -> ImuBatch:
    """Sample the trajectory at ``rate`` Hz over [0, duration).

    With zero noise and zero bias the samples invert exactly to the
    analytic kinematics.  Biases follow discrete random walks started at
    the given initial values.
    """
    if rate <= 0:
        raise ValueError("IMU rate must be positive")
    duration = spec.duration if duration is None else duration
    n = int(round(rate * duration))
    dt = 1.0 / rate
    rng = np.random.default_rng(seed)
    g = np.asarray(gravity, dtype=float)

    t = np.arange(n) * dt
    omega = np.empty((n, 3))
    accel = np.empty((n, 3))
    for i in range(n):
        kin = sample(spec, t[i])
        omega[i] = kin.omega
        accel[i] = kin.R_IG.matrix @ (kin.a - g)

    bg = np.empty((n, 3))
    ba = np.empty((n, 3))
    bg[0] = np.asarray(bias[0], dtype=float)
    ba[0] = np.asarray(bias[1], dtype=float)
    sq = math.sqrt(dt)
    if noise.gyro_walk > 0 or noise.accel_walk > 0:
        steps_g = noise.gyro_walk * sq * rng.standard_normal((n - 1, 3))
        steps_a = noise.accel_walk * sq * rng.standard_normal((n - 1, 3))
        bg[1:] = bg[0] + np.cumsum(steps_g, axis=0)
        ba[1:] = ba[0] + np.cumsum(steps_a, axis=0)
    else:
        bg[1:] = bg[0]
        ba[1:] = ba[0]

    sigma_g = noise.gyro_density * math.sqrt(rate)
    sigma_a = noise.accel_density * math.sqrt(rate)
    omega += bg
    accel += ba
    if sigma_g > 0:
        omega += sigma_g * rng.standard_normal((n, 3))
    if sigma_a > 0:
        accel += sigma_a * rng.standard_normal((n, 3))
    return ImuBatch(t=t, omega=omega, accel=accel,
                    bias_gyro=bg, bias_accel=ba, rate=rate)


# ---------------------------------------------------------------------------
# camera


@dataclass(frozen=True)
class CameraModel:
    """Ideal pinhole in normalized coordinates with symmetric FOV."""

    fov_deg: float = 90.0
    min_depth: float = 0.05

    @property
    def tan_half_fov(self) -> float:
        return math.tan(math.radians(0.5 * self.fov_deg))

    def in_view(self, pc: np.ndarray) -> bool:
        if pc[2] <= self.min_depth:
            return False
        lim = self.tan_half_fov
        return abs(pc[0] / pc[2]) <= lim and abs(pc[1] / pc[2]) <= lim


@dataclass(frozen=True)
class FeatureObservation:
    t: float
    feature_id: int
    bearing: np.ndarray       # normalized image coordinates (x/z, y/z)
    pixel_sigma: float


@dataclass(frozen=True)
class FeatureEnvelope:
    """Placement and visibility constraints for the synthetic feature map.

    Features are spawned on camera rays cast from keyframe poses, so they
    are visible by construction; each must be seen from at least
    ``min_views`` keyframes with ray parallax above ``min_parallax_deg``.
    """

    camera: CameraModel = CameraModel()
    extrinsic_rotation: Rotation = field(default_factory=Rotation.identity)  # R_CI
    extrinsic_translation: np.ndarray = field(
        default_factory=lambda: np.zeros(3))  # p_CI: IMU origin in camera frame
    depth_min: float = 3.0
    depth_max: float = 10.0
    image_margin: float = 0.8     # fraction of half-FOV used when spawning
    min_views: int = 2
    min_parallax_deg: float = 2.0
    keyframe_hz: float = 1.0


@dataclass
class FeatureMap:
    positions: np.ndarray        # (F, 3) in global frame
    seed: int
    envelope: FeatureEnvelope

    def __len__(self) -> int:
        return self.positions.shape[0]


def camera_pose(kin: KinematicSample, r_ci: Rotation, p_ci: np.ndarray):
    """Camera orientation R_GC and center in the global frame."""
    r_gi = kin.R_IG.matrix.T
    r_gc = r_gi @ r_ci.matrix.T
    center = kin.p - r_gi @ (r_ci.matrix.T @ np.asarray(p_ci, dtype=float))
    return r_gc, center


def point_in_camera(p_f: np.ndarray, kin: KinematicSample,
                    r_ci: Rotation, p_ci: np.ndarray) -> np.ndarray:
    """Feature position expressed in the camera frame."""
    return r_ci.matrix @ (kin.R_IG.matrix @ (p_f - kin.p)) + np.asarray(p_ci, dtype=float)


def generate_features(spec: TrajectorySpec, count: int,
                      envelope: FeatureEnvelope, seed=0,
                      max_tries_per_feature: int = 200) -> FeatureMap:
    """Spawn ``count`` features on rays cast from keyframe camera poses.

    Raises :class:`FeatureGenerationError` when the envelope admits no
    placement (e.g. an unreachable parallax floor).
    """
    if count < 0:
        raise ValueError("feature count must be nonnegative")
    if envelope.depth_min <= 0 or envelope.depth_max < envelope.depth_min:
        raise FeatureGenerationError(
            f"invalid depth range [{envelope.depth_min}, {envelope.depth_max}]")
    rng = np.random.default_rng(seed)
    cam = envelope.camera
    r_ci, p_ci = envelope.extrinsic_rotation, envelope.extrinsic_translation

    times = np.arange(0.0, spec.duration + 1e-9, 1.0 / envelope.keyframe_hz)
    kins = [sample(spec, float(t)) for t in times]
    poses = [camera_pose(k, r_ci, p_ci) for k in kins]

    def visibility(p_f: np.ndarray):
        views = []
        for k, kin in enumerate(kins):
            if cam.in_view(point_in_camera(p_f, kin, r_ci, p_ci)):
                views.append(k)
        return views

    def max_parallax_deg(p_f: np.ndarray, views) -> float:
        rays = np.array([(p_f - poses[k][1]) for k in views])
        rays /= np.linalg.norm(rays, axis=1, keepdims=True)
        best = 0.0
        for i in range(len(rays)):
            cosang = np.clip(rays[i + 1:] @ rays[i], -1.0, 1.0)
            if cosang.size:
                best = max(best, float(np.degrees(np.arccos(cosang.min()))))
        return best

    lim = envelope.image_margin * cam.tan_half_fov
    positions = []
    order = rng.permutation(len(kins))
    for i in range(count):
        placed = False
        for attempt in range(max_tries_per_feature):
            anchor = int(order[(i + attempt) % len(order)])
            uv = rng.uniform(-lim, lim, size=2)
            depth = rng.uniform(envelope.depth_min, envelope.depth_max)
            ray_c = np.array([uv[0], uv[1], 1.0]) * depth
            r_gc, center = poses[anchor]
            p_f = center + r_gc @ ray_c
            views = visibility(p_f)
            if len(views) < envelope.min_views:
                continue
            if max_parallax_deg(p_f, views) < envelope.min_parallax_deg:
                continue
            positions.append(p_f)
            placed = True
            break
        if not placed:
            raise FeatureGenerationError(
                "envelope infeasible: no visible placement with required "
                f"parallax after {max_tries_per_feature} tries")
    pos = np.array(positions) if positions else np.zeros((0, 3))
    return FeatureMap(positions=pos, seed=seed, envelope=envelope)


def observe_features(fmap: FeatureMap, kin: KinematicSample,
                     r_ci: Rotation, p_ci: np.ndarray,
                     pixel_sigma: float, rng=None) -> list[FeatureObservation]:
    """Project all map features visible from the given pose.

    Features behind the camera or outside the FOV are silently skipped.
    ``rng`` may be a Generator or a seed; zero ``pixel_sigma`` reproduces
    the exact projection.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    cam = fmap.envelope.camera
    out = []
    for fid in range(len(fmap)):
        pc = point_in_camera(fmap.positions[fid], kin, r_ci, p_ci)
        if not cam.in_view(pc):
            continue
        bearing = pc[:2] / pc[2]
        if pixel_sigma > 0:
            bearing = bearing + pixel_sigma * rng.standard_normal(2)
        out.append(FeatureObservation(kin.t, fid, bearing, pixel_sigma))
    return out


# ---------------------------------------------------------------------------
# global pose


@dataclass(frozen=True)
class GlobalPoseObservation:
    t: float
    p_meas: np.ndarray      # m, global frame
    R_meas: Rotation        # measured R_IG


def observe_global_pose(kin: KinematicSample, sigma_p: float,
                        sigma_theta: float, rng=None) -> GlobalPoseObservation:
    """Noisy absolute pose: position plus small-angle-perturbed orientation."""
    if sigma_p < 0 or sigma_theta < 0:
        raise ValueError("noise sigmas must be nonnegative")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    p_meas = kin.p + sigma_p * rng.standard_normal(3)
    n_theta = sigma_theta * rng.standard_normal(3)
    r_meas = Rotation.exp(-n_theta) @ kin.R_IG
    return GlobalPoseObservation(kin.t, p_meas, r_meas)
