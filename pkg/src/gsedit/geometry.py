"""Rigid poses, pinhole cameras, and world/camera/image projection.

Conventions used throughout the package: world +z is up; the camera looks
along its +z axis with +x right and +y down; pixel (row i, col j) samples
the image plane at (u, v) = (j, i). Angles are radians everywhere (degrees
exist only at the CLI boundary). Rotations are stored as 3x3 matrices;
quaternions (w, x, y, z) appear only at I/O boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera

# Points closer than this along the optical axis are culled everywhere.
NEAR_PLANE = 0.1

_ORTHO_TOL = 1e-9


def _as_array(x, shape) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a.reshape(shape)


@dataclass(frozen=True)
class Pose:
    """Rigid transform: x_out = rotation @ x_in + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = _as_array(self.rotation, (3, 3))
        t = _as_array(self.translation, (3,))
        err = np.abs(R.T @ R - np.eye(3)).max()
        if err > _ORTHO_TOL:
            raise ValueError(f"rotation not orthonormal (|R^T R - I| = {err:.3e})")
        if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation must be proper (det = +1)")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (N, 3) batch."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous form."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


def compose(a: Pose, b: Pose) -> Pose:
    """Pose applying b first, then a: (R_a R_b, R_a t_b + t_a)."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(p: Pose) -> Pose:
    return Pose(p.rotation.T, -(p.rotation.T @ p.translation))


def yaw_pose(yaw: float, center) -> Pose:
    """Rotation about world +z by yaw (radians), translation = center.

    yaw = 0 faces world +x; positive yaw turns toward +y.
    """
    c, s = math.cos(yaw), math.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return Pose(rot, _as_array(center, (3,)))


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = (a + math.pi) % (2.0 * math.pi) - math.pi
    if w <= -math.pi:
        w = math.pi
    return w


# --- quaternions (w, x, y, z) -----------------------------------------------

def normalize_quat(q, max_dev: float = 1e-3) -> np.ndarray:
    """Normalize a quaternion, rejecting norms further than max_dev from 1."""
    q = _as_array(q, (4,))
    n = float(np.linalg.norm(q))
    if abs(n - 1.0) > max_dev:
        raise ValueError(f"quaternion norm {n:.6f} deviates more than {max_dev} from 1")
    return q / n


def quat_to_matrix(q) -> np.ndarray:
    """Unit quaternion (w, x, y, z) to rotation matrix."""
    w, x, y, z = np.asarray(q, dtype=np.float64).reshape(4)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (w, x, y, z)."""
    R = _as_array(R, (3, 3))
    trace = R[0, 0] + R[1, 1] + R[2, 2]
    if trace > 0:
        s = 0.5 / math.sqrt(trace + 1.0)
        w = 0.25 / s
        x = (R[2, 1] - R[1, 2]) * s
        y = (R[0, 2] - R[2, 0]) * s
        z = (R[1, 0] - R[0, 1]) * s
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        w = (R[2, 1] - R[1, 2]) / s
        x = 0.25 * s
        y = (R[0, 1] + R[1, 0]) / s
        z = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        w = (R[0, 2] - R[2, 0]) / s
        x = (R[0, 1] + R[1, 0]) / s
        y = 0.25 * s
        z = (R[1, 2] + R[2, 1]) / s
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        w = (R[1, 0] - R[0, 1]) / s
        x = (R[0, 2] + R[2, 0]) / s
        y = (R[1, 2] + R[2, 1]) / s
        z = 0.25 * s
    q = np.array([w, x, y, z])
    return q / np.linalg.norm(q)


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product; accepts (4,) or (N, 4) on either side."""
    a = np.atleast_2d(np.asarray(q1, dtype=np.float64))
    b = np.atleast_2d(np.asarray(q2, dtype=np.float64))
    w1, x1, y1, z1 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    w2, x2, y2, z2 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    out = np.stack([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ], axis=-1)
    if np.asarray(q1).ndim == 1 and np.asarray(q2).ndim == 1:
        return out[0]
    return out


# --- cameras ------------------------------------------------------------------

@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width):
            raise ValueError("cx must lie inside the image")
        if not (0 < self.cy < self.height):
            raise ValueError("cy must lie inside the image")


@dataclass(frozen=True)
class CameraFrame:
    intrinsics: CameraIntrinsics
    cam_to_world: Pose
    frame_index: int
    camera_id: str

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError("frame_index must be non-negative")
        if not self.camera_id:
            raise ValueError("camera_id must be nonempty")

    @property
    def optical_center(self) -> np.ndarray:
        return self.cam_to_world.translation


def world_to_camera(p: np.ndarray, cam: CameraFrame) -> np.ndarray:
    """World point(s) to camera coordinates: R^T (p - t)."""
    pose = cam.cam_to_world
    q = np.asarray(p, dtype=np.float64)
    return (q - pose.translation) @ pose.rotation


def camera_to_world(p: np.ndarray, cam: CameraFrame) -> np.ndarray:
    return cam.cam_to_world.apply(p)


def project_point(p, cam: CameraFrame, near: float = NEAR_PLANE) -> tuple[float, float, float]:
    """Pinhole projection of one world point to (u, v, depth).

    Raises BehindCamera when the camera-space z is at or behind the near
    plane.
    """
    x, y, z = world_to_camera(np.asarray(p, dtype=np.float64).reshape(3), cam)
    if z <= near:
        raise BehindCamera(f"camera-space z = {z:.3f} m is behind the near plane ({near} m)")
    k = cam.intrinsics
    return (k.fx * x / z + k.cx, k.fy * y / z + k.cy, z)


def project_points(pts: np.ndarray, cam: CameraFrame) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized pinhole projection of (N, 3) world points.

    Returns ((N, 2) pixel coords, (N,) camera-space depths). No near-plane
    check is applied; callers mask on depth.
    """
    pc = world_to_camera(np.asarray(pts, dtype=np.float64).reshape(-1, 3), cam)
    k = cam.intrinsics
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k.fx * pc[:, 0] / z + k.cx
        v = k.fy * pc[:, 1] / z + k.cy
    return np.stack([u, v], axis=1), z


def unproject_point(u: float, v: float, depth: float, cam: CameraFrame) -> np.ndarray:
    """Inverse of project_point: pixel + camera-space depth to a world point."""
    k = cam.intrinsics
    pc = np.array([(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth])
    return camera_to_world(pc, cam)
