"""Closed-form 6-DoF test trajectories with exact derivatives.

Two straight-line profiles drive the degenerate-motion study (a sinusoid
along a fixed axis, and a constant-velocity drive along the same axis),
plus a fully excited trajectory used as the observable control.  Closed
forms, rather than splines, keep the straight-line constraints exact to
machine precision, which the null-space checks rely on.

Frames: ``p``, ``v``, ``a`` are the IMU position/velocity/acceleration in
the global frame; ``R_IG`` maps global vectors into the IMU frame; ``omega``
is the body angular rate in the IMU frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .so3 import Rotation, right_jacobian

STRAIGHT_LINE_SINUSOID = "straight-line-sinusoid"
STRAIGHT_LINE_CONSTANT_VELOCITY = "straight-line-constant-velocity"
GENERIC_EXCITATION = "generic-excitation"


@dataclass(frozen=True)
class KinematicSample:
    """Exact kinematic state at one instant."""

    t: float
    p: np.ndarray          # m
    v: np.ndarray          # m/s
    a: np.ndarray          # m/s^2
    R_IG: Rotation         # global -> IMU
    omega: np.ndarray      # rad/s, IMU frame


@dataclass(frozen=True)
class TrajectorySpec:
    """Analytic trajectory: position profile plus an orientation profile.

    The orientation is parameterized by a rotation vector ``phi(t)`` with
    ``R_GI(t) = exp(skew(phi(t)))`` so the body rate has the closed form
    ``omega = J_r(phi) dphi/dt``.  Straight-line kinds use ``phi == 0``.
    """

    kind: str
    direction: np.ndarray                     # unit vector, IMU frame
    duration: float                           # s
    position: Callable[[float], np.ndarray]
    velocity: Callable[[float], np.ndarray]
    acceleration: Callable[[float], np.ndarray]
    phi: Callable[[float], np.ndarray] = field(
        default=lambda t: np.zeros(3))
    dphi: Callable[[float], np.ndarray] = field(
        default=lambda t: np.zeros(3))

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-12:
            raise ValueError(f"direction must be unit length, got |d|={n}")
        object.__setattr__(self, "direction", d)

    @property
    def is_straight_line(self) -> bool:
        return self.kind in (STRAIGHT_LINE_SINUSOID,
                             STRAIGHT_LINE_CONSTANT_VELOCITY)


def sample(spec: TrajectorySpec, t: float) -> KinematicSample:
    """Exact kinematics at time t.  Raises for t outside [0, duration]."""
    if not 0.0 <= t <= spec.duration:
        raise ValueError(f"t={t} outside trajectory domain [0, {spec.duration}]")
    phi = np.asarray(spec.phi(t), dtype=float)
    omega = right_jacobian(phi) @ np.asarray(spec.dphi(t), dtype=float)
    r_gi = Rotation.exp(phi)
    return KinematicSample(
        t=t,
        p=np.asarray(spec.position(t), dtype=float),
        v=np.asarray(spec.velocity(t), dtype=float),
        a=np.asarray(spec.acceleration(t), dtype=float),
        R_IG=r_gi.inverse(),
        omega=omega,
    )


def make_trajectory_1(duration: float = 60.0) -> TrajectorySpec:
    """Straight line along x with sinusoidal (variable-velocity) profile.

    p(t) = [2 cos(pi t / 5), 0, 0], identity orientation.
    """
    w = math.pi / 5.0
    return TrajectorySpec(
        kind=STRAIGHT_LINE_SINUSOID,
        direction=np.array([1.0, 0.0, 0.0]),
        duration=duration,
        position=lambda t: np.array([2.0 * math.cos(w * t), 0.0, 0.0]),
        velocity=lambda t: np.array([-2.0 * w * math.sin(w * t), 0.0, 0.0]),
        acceleration=lambda t: np.array([-2.0 * w * w * math.cos(w * t), 0.0, 0.0]),
    )


def make_trajectory_2(duration: float = 60.0) -> TrajectorySpec:
    """Straight line along x at constant velocity: p(t) = [0.5 t, 0, 0]."""
    return TrajectorySpec(
        kind=STRAIGHT_LINE_CONSTANT_VELOCITY,
        direction=np.array([1.0, 0.0, 0.0]),
        duration=duration,
        position=lambda t: np.array([0.5 * t, 0.0, 0.0]),
        velocity=lambda t: np.array([0.5, 0.0, 0.0]),
        acceleration=lambda t: np.zeros(3),
    )


def make_generic_excitation(duration: float = 60.0) -> TrajectorySpec:
    """Fully excited control trajectory: 3-axis translation, 2-axis rotation.

    Translational and rotational excitation each span at least two degrees
    of freedom, the regime in which the rotational extrinsic parameter is
    observable.  Orientation starts at identity.
    """
    ax = np.array([1.2, 0.9, 0.5])
    wx = np.array([0.9, 0.7, 1.3])
    aphi = np.array([0.40, 0.35, 0.0])
    wphi = np.array([0.8, 1.1, 1.0])

    def position(t):
        return ax * np.sin(wx * t)

    def velocity(t):
        return ax * wx * np.cos(wx * t)

    def acceleration(t):
        return -ax * wx * wx * np.sin(wx * t)

    def phi(t):
        return aphi * np.sin(wphi * t)

    def dphi(t):
        return aphi * wphi * np.cos(wphi * t)

    return TrajectorySpec(
        kind=GENERIC_EXCITATION,
        direction=np.array([1.0, 0.0, 0.0]),   # nominal; no line constraint holds
        duration=duration,
        position=position,
        velocity=velocity,
        acceleration=acceleration,
        phi=phi,
        dphi=dphi,
    )


TRAJECTORY_FACTORIES = {
    "1": make_trajectory_1,
    "2": make_trajectory_2,
    "generic": make_generic_excitation,
}
