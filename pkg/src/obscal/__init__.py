"""Observability analysis and online rotational IMU-camera calibration.

The package studies how degenerate motion, in particular pure translational
straight-line motion, affects the observability of the rotational extrinsic
parameter between an IMU and a camera in visual-inertial odometry, both with
and without global-pose aiding.  It provides:

- exact SO(3)/quaternion arithmetic (:mod:`obscal.so3`),
- closed-form test trajectories (:mod:`obscal.trajectory`),
- a deterministic multi-sensor simulator (:mod:`obscal.sensors`),
- observability-matrix construction and numerical null-space analysis
  (:mod:`obscal.observability`),
- an error-state Kalman filter with online rotational extrinsic calibration
  (:mod:`obscal.estimator`),
- an experiment harness and CLI (:mod:`obscal.harness`, :mod:`obscal.cli`).
"""

from .so3 import Rotation, Rpy, rotation_from_rpy, rotation_error_rpy, skew
from .trajectory import (
    TrajectorySpec,
    KinematicSample,
    make_trajectory_1,
    make_trajectory_2,
    make_generic_excitation,
    sample,
)

__all__ = [
    "Rotation",
    "Rpy",
    "rotation_from_rpy",
    "rotation_error_rpy",
    "skew",
    "TrajectorySpec",
    "KinematicSample",
    "make_trajectory_1",
    "make_trajectory_2",
    "make_generic_excitation",
    "sample",
]

__version__ = "0.1.0"
