"""3D vectors, rotations and camera poses.

Conventions
-----------
- Vectors are plain numpy arrays of shape (3,), float64.
- Rotations are stored as unit quaternions (scalar-first, w x y z) and
  renormalized after every operation; the 3x3 matrix view is computed on
  demand. Long products therefore do not drift away from orthonormality.
- Angles are radians everywhere inside the library; degrees appear only at
  the CLI/report boundary.
- A Pose stores the world-to-camera rotation together with the camera
  center expressed in the world frame. SfM tools that serialize the
  translation vector t instead use c = -R^T t; see pose_from_rt().
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

Vec3 = np.ndarray

_QUAT_EPS = 1e-12


def vec3(x: float, y: float, z: float) -> Vec3:
    """Build a finite (3,) float64 vector, rejecting NaN/Inf components."""
    v = np.array([x, y, z], dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"vector components must be finite, got {v}")
    return v


def as_vec3(v) -> Vec3:
    """Coerce any length-3 sequence to a finite float64 vector."""
    a = np.asarray(v, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"vector components must be finite, got {a}")
    return a


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product of scalar-first quaternions."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


class Rotation:
    """Rotation in SO(3), backed by a unit quaternion."""

    __slots__ = ("_q",)

    def __init__(self, quat):
        q = np.asarray(quat, dtype=np.float64).reshape(4)
        n = math.sqrt(float(q @ q))
        if not math.isfinite(n) or n < _QUAT_EPS:
            raise ValueError(f"quaternion has invalid norm {n}")
        self._q = q / n

    @classmethod
    def identity(cls) -> "Rotation":
        return cls((1.0, 0.0, 0.0, 0.0))

    @classmethod
    def from_quat(cls, w: float, x: float, y: float, z: float) -> "Rotation":
        return cls((w, x, y, z))

    @classmethod
    def from_matrix(cls, m) -> "Rotation":
        """Quaternion from a 3x3 rotation matrix (Shepperd's branching)."""
        m = np.asarray(m, dtype=np.float64).reshape(3, 3)
        t = m[0, 0] + m[1, 1] + m[2, 2]
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            q = (0.25 * s, (m[2, 1] - m[1, 2]) / s,
                 (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
        elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            q = ((m[2, 1] - m[1, 2]) / s, 0.25 * s,
                 (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
        elif m[1, 1] >= m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            q = ((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s,
                 0.25 * s, (m[1, 2] + m[2, 1]) / s)
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            q = ((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                 (m[1, 2] + m[2, 1]) / s, 0.25 * s)
        return cls(q)

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Rotation":
        a = as_vec3(axis)
        n = float(np.linalg.norm(a))
        if n < _QUAT_EPS:
            raise ValueError("rotation axis must be nonzero")
        return so3_exp(a * (angle / n))

    @property
    def quat(self) -> np.ndarray:
        """Unit quaternion, scalar-first (copy)."""
        return self._q.copy()

    @property
    def matrix(self) -> np.ndarray:
        """3x3 orthonormal matrix view (det +1)."""
        w, x, y, z = self._q
        xx, yy, zz = x * x, y * y, z * z
        wx, wy, wz = w * x, w * y, w * z
        xy, xz, yz = x * y, x * z, y * z
        return np.array([
            [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
            [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
            [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
        ])

    def compose(self, other: "Rotation") -> "Rotation":
        """Rotation whose matrix is self.matrix @ other.matrix."""
        return Rotation(_quat_mul(self._q, other._q))

    def __matmul__(self, other: "Rotation") -> "Rotation":
        return self.compose(other)

    def inverse(self) -> "Rotation":
        w, x, y, z = self._q
        return Rotation((w, -x, -y, -z))

    def apply(self, v) -> Vec3:
        """Rotate a vector: matrix @ v, without building the matrix."""
        w = self._q[0]
        u = self._q[1:]
        vv = np.asarray(v, dtype=np.float64).reshape(3)
        # Rodrigues via quaternion: v + 2w (u x v) + 2 u x (u x v)
        t = 2.0 * np.cross(u, vv)
        return vv + w * t + np.cross(u, t)

    def angle_to(self, other: "Rotation") -> float:
        """Geodesic angle between two rotations, in [0, pi]."""
        return float(np.linalg.norm(so3_log(self.inverse() @ other)))

    def __repr__(self) -> str:
        w, x, y, z = self._q
        return f"Rotation(w={w:.6g}, x={x:.6g}, y={y:.6g}, z={z:.6g})"


def rotation_compose(a: Rotation, b: Rotation) -> Rotation:
    return a.compose(b)


def rotation_inverse(r: Rotation) -> Rotation:
    return r.inverse()


def so3_exp(phi) -> Rotation:
    """Rotation from a rotation vector (axis * angle, radians)."""
    v = as_vec3(phi)
    angle = float(np.linalg.norm(v))
    half = 0.5 * angle
    if angle < 1e-6:
        # sin(a/2)/a = 1/2 - a^2/48 + O(a^4); exact to double precision here
        k = 0.5 - angle * angle / 48.0
    else:
        k = math.sin(half) / angle
    return Rotation((math.cos(half), k * v[0], k * v[1], k * v[2]))


def so3_log(r: Rotation) -> Vec3:
    """Rotation vector of r with norm in [0, pi].

    At exactly pi the axis sign is ambiguous; this returns the axis with the
    quaternion vector part as stored (either choice exponentiates back to r).
    """
    q = r.quat
    if q[0] < 0.0:
        q = -q  # canonical hemisphere, keeps angle <= pi
    w = q[0]
    v = q[1:]
    s = float(np.linalg.norm(v))
    if s < 1e-9:
        # angle/sin(angle/2) expansion about identity: 2/w * (1 - s^2/(3 w^2))
        k = 2.0 / w * (1.0 - s * s / (3.0 * w * w))
    else:
        k = 2.0 * math.atan2(s, w) / s
    return v * k


def slerp(a: Rotation, b: Rotation, alpha: float) -> Rotation:
    """Spherical interpolation from a (alpha=0) to b (alpha=1)."""
    return a @ so3_exp(alpha * so3_log(a.inverse() @ b))


def rot_x(angle: float) -> Rotation:
    return so3_exp((angle, 0.0, 0.0))


def rot_y(angle: float) -> Rotation:
    return so3_exp((0.0, angle, 0.0))


def rot_z(angle: float) -> Rotation:
    return so3_exp((0.0, 0.0, angle))


@dataclass(frozen=True)
class Pose:
    """Time-stamped camera pose in the SfM/world frame.

    rotation maps world-frame vectors into the camera frame; center is the
    camera position in the world frame; timestamp is seconds.
    """

    rotation: Rotation
    center: Vec3
    timestamp: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec3(self.center))
        t = float(self.timestamp)
        if not math.isfinite(t) or t < 0.0:
            raise ValueError(f"timestamp must be finite and non-negative, got {t}")
        object.__setattr__(self, "timestamp", t)

    @property
    def translation(self) -> Vec3:
        """Camera-frame translation t = -R c, as serialized by most SfM tools."""
        return -self.rotation.apply(self.center)

    def with_timestamp(self, timestamp: float) -> "Pose":
        return replace(self, timestamp=timestamp)


def pose_from_rt(rotation: Rotation, translation, timestamp: float) -> Pose:
    """Pose from world-to-camera rotation and translation (c = -R^T t)."""
    t = as_vec3(translation)
    return Pose(rotation=rotation, center=-rotation.inverse().apply(t),
                timestamp=timestamp)
