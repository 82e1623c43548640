"""Minimal SO(3) / quaternion arithmetic and Euler-angle conversions.

Conventions used across the package:

- Quaternions are Hamilton, scalar-first ``(w, x, y, z)``, renormalized
  after every composition so 60 s simulations do not drift off the unit
  sphere.
- Euler angles are intrinsic Z-Y-X (yaw about z, then pitch about the new
  y, then roll about the new x), reported in degrees:
  ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
- ``skew(v) @ w == cross(v, w)``.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np


class Rpy(NamedTuple):
    """Roll/pitch/yaw triple in degrees (intrinsic Z-Y-X)."""

    roll: float
    pitch: float
    yaw: float

    def as_array(self) -> np.ndarray:
        return np.array([self.roll, self.pitch, self.yaw], dtype=float)


def skew(v) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector: skew(v) @ w = v x w."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])


def _quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def _quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


class Rotation:
    """SO(3) element stored as a unit quaternion with a cached matrix view.

    Composition is matrix-like: ``(a @ b).matrix == a.matrix @ b.matrix``.
    """

    __slots__ = ("q", "_matrix")

    def __init__(self, q):
        q = np.asarray(q, dtype=float)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n == 0.0:
            raise ValueError("quaternion must be finite and nonzero")
        self.q = q / n
        self._matrix = None

    # -- constructors -------------------------------------------------

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def from_matrix(m) -> "Rotation":
        """Quaternion from a rotation matrix (Shepperd's method)."""
        m = np.asarray(m, dtype=float)
        t = np.trace(m)
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            q = np.array([
                0.25 * s,
                (m[2, 1] - m[1, 2]) / s,
                (m[0, 2] - m[2, 0]) / s,
                (m[1, 0] - m[0, 1]) / s,
            ])
        else:
            i = int(np.argmax(np.diag(m)))
            j, k = (i + 1) % 3, (i + 2) % 3
            s = math.sqrt(max(m[i, i] - m[j, j] - m[k, k] + 1.0, 0.0)) * 2.0
            q = np.empty(4)
            q[0] = (m[k, j] - m[j, k]) / s
            q[1 + i] = 0.25 * s
            q[1 + j] = (m[j, i] + m[i, j]) / s
            q[1 + k] = (m[k, i] + m[i, k]) / s
        return Rotation(q)

    @staticmethod
    def exp(phi) -> "Rotation":
        """Exponential map: rotation by angle ||phi|| about axis phi/||phi||."""
        phi = np.asarray(phi, dtype=float)
        angle = np.linalg.norm(phi)
        half = 0.5 * angle
        if angle < 1e-10:
            # fourth-order small-angle series for the vector factor
            fac = 0.5 - angle * angle / 48.0
            q = np.concatenate(([math.cos(half)], fac * phi))
        else:
            q = np.concatenate(([math.cos(half)], math.sin(half) / angle * phi))
        return Rotation(q)

    # -- views ---------------------------------------------------------

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = _quat_to_matrix(self.q)
        return self._matrix

    def log(self) -> np.ndarray:
        """Rotation vector such that Rotation.exp(r.log()) == r."""
        q = self.q if self.q[0] >= 0.0 else -self.q
        vec = q[1:]
        n = np.linalg.norm(vec)
        if n < 1e-10:
            return 2.0 * vec * (1.0 + n * n / (6.0 * max(q[0], 1e-300) ** 2))
        angle = 2.0 * math.atan2(n, q[0])
        return vec * (angle / n)

    # -- algebra --------------------------------------------------------

    def __matmul__(self, other: "Rotation") -> "Rotation":
        return Rotation(_quat_multiply(self.q, other.q))

    def inverse(self) -> "Rotation":
        return Rotation(self.q * np.array([1.0, -1.0, -1.0, -1.0]))

    def apply(self, v) -> np.ndarray:
        return self.matrix @ np.asarray(v, dtype=float)

    def __repr__(self) -> str:
        return f"Rotation(q={self.q!r})"


def rotation_from_rpy(rpy) -> Rotation:
    """Rotation from (roll, pitch, yaw) degrees, intrinsic Z-Y-X.

    Accepts an ``Rpy`` or any 3-sequence ordered (roll, pitch, yaw).
    """
    r, p, y = (math.radians(a) for a in rpy)
    hr, hp, hy = 0.5 * r, 0.5 * p, 0.5 * y
    qz = np.array([math.cos(hy), 0.0, 0.0, math.sin(hy)])
    qy = np.array([math.cos(hp), 0.0, math.sin(hp), 0.0])
    qx = np.array([math.cos(hr), math.sin(hr), 0.0, 0.0])
    return Rotation(_quat_multiply(_quat_multiply(qz, qy), qx))


def rpy_from_rotation(rot: Rotation) -> Rpy:
    """Extract intrinsic Z-Y-X angles in degrees. Pitch is in [-90, 90]."""
    m = rot.matrix
    pitch = math.asin(max(-1.0, min(1.0, -m[2, 0])))
    if abs(m[2, 0]) < 1.0 - 1e-12:
        roll = math.atan2(m[2, 1], m[2, 2])
        yaw = math.atan2(m[1, 0], m[0, 0])
    else:
        # gimbal lock: roll/yaw are coupled, pin roll to zero
        roll = 0.0
        yaw = math.atan2(-m[0, 1], m[1, 1])
    return Rpy(math.degrees(roll), math.degrees(pitch), math.degrees(yaw))


def rotation_error_rpy(r_est: Rotation, r_true: Rotation) -> Rpy:
    """Angular error of an estimate, as the Z-Y-X angles of est * true^T.

    All-zero exactly when the two rotations coincide.
    """
    return rpy_from_rotation(Rotation.from_matrix(r_est.matrix @ r_true.matrix.T))


def right_jacobian(phi) -> np.ndarray:
    """Right Jacobian of the SO(3) exponential at rotation vector phi.

    Maps rates of the rotation vector to body angular velocity:
    if R(t) = exp(skew(phi(t))) then  R^T dR/dt = skew(J_r(phi) dphi/dt).
    """
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    px = skew(phi)
    if theta < 1e-7:
        return np.eye(3) - 0.5 * px + px @ px / 6.0
    t2 = theta * theta
    return (
        np.eye(3)
        - (1.0 - math.cos(theta)) / t2 * px
        + (theta - math.sin(theta)) / (t2 * theta) * (px @ px)
    )
