"""Quaternion and rigid-transform math shared by all modules.

Quaternions are numpy arrays in (w, x, y, z) order. Rotations compose
left-to-right as ``parent o child``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    return q / n


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by quaternion q."""
    qv = np.array([0.0, v[0], v[1], v[2]])
    r = quat_multiply(quat_multiply(q, qv), quat_conjugate(q))
    return r[1:]


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("zero-length axis")
    half = 0.5 * angle
    s = np.sin(half) / n
    return np.array([np.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_from_rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Fixed-axis XYZ convention: R = Rz(yaw) * Ry(pitch) * Rx(roll)."""
    qx = quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), roll)
    qy = quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), pitch)
    qz = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw)
    return quat_multiply(qz, quat_multiply(qy, qx))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def swing_twist(q: np.ndarray, axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split q into (swing, twist) with twist the rotation about ``axis``.

    q = swing o twist. For q orthogonal to the axis the twist is identity.
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    if np.linalg.norm(q) == 0.0:
        raise ValueError("zero quaternion")
    proj = np.dot(q[1:], axis) * axis
    twist = np.array([q[0], proj[0], proj[1], proj[2]])
    n = np.linalg.norm(twist)
    if n < 1e-12:
        # 180 degree swing, twist degenerate: pick identity
        twist = IDENTITY_QUAT.copy()
    else:
        twist = twist / n
    swing = quat_multiply(q, quat_conjugate(twist))
    return swing, twist


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation (unit quaternion, wxyz) then translation."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())

    def __post_init__(self):
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))
        q = np.asarray(self.rotation, dtype=float)
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-12:
            if n == 0.0:
                raise ValueError("zero quaternion")
            q = q / n
        object.__setattr__(self, "rotation", q)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_rpy(xyz, rpy) -> "Pose":
        return Pose(np.asarray(xyz, dtype=float), quat_from_rpy(*rpy))

    def compose(self, other: "Pose") -> "Pose":
        t = self.translation + quat_rotate(self.rotation, other.translation)
        q = quat_multiply(self.rotation, other.rotation)
        return Pose(t, q)

    def inverse(self) -> "Pose":
        qi = quat_conjugate(self.rotation)
        return Pose(-quat_rotate(qi, self.translation), qi)

    def transform_point(self, p: np.ndarray) -> np.ndarray:
        return self.translation + quat_rotate(self.rotation, np.asarray(p, dtype=float))
