"""
Pinhole cameras, posed frames and per-pixel ray encodings.

Poses are world-from-camera: X_world = R X_cam + t, so the camera centre is
the translation. The camera looks down +z with +x to the right and +y down.
Pixel (u, v) is the integer index of a pixel; its ray passes through the
pixel centre (u + 0.5, v + 0.5).
"""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import torch

from model.rotation import quat_to_rotmat
from utils.errors import DomainError


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if not (self.width > 0 and self.height > 0):
            raise DomainError(f"image size must be positive, got {self.width}x{self.height}")

    @classmethod
    def centered(cls, width: int, height: int, focal: float) -> "CameraIntrinsics":
        """Intrinsics with the principal point at the image centre."""
        return cls(fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0, width=width, height=height)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width


@dataclass(frozen=True)
class CameraPose:
    """World-from-camera rigid transform."""
    rotation: Tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64).reshape(-1)
        if q.shape != (4,) or not np.all(np.isfinite(q)):
            raise DomainError(f"rotation must be a finite quaternion, got {self.rotation}")
        norm = float(np.linalg.norm(q))
        if norm == 0:
            raise DomainError("rotation quaternion must be non-zero")
        t = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if t.shape != (3,):
            raise DomainError(f"translation must have 3 components, got {self.translation}")
        object.__setattr__(self, "rotation", tuple(float(x) for x in q / norm))
        object.__setattr__(self, "translation", tuple(float(x) for x in t))

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_rotmat(torch.tensor(self.rotation, dtype=torch.float64)).numpy()

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.translation, dtype=np.float64)

    @classmethod
    def look_at(cls, eye, target, down=(0.0, 1.0, 0.0)) -> "CameraPose":
        """Pose of a camera at eye whose +z axis points at target and +y leans towards down."""
        eye = np.asarray(eye, dtype=np.float64)
        z = np.asarray(target, dtype=np.float64) - eye
        z /= np.linalg.norm(z)
        x = np.cross(np.asarray(down, dtype=np.float64), z)
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        return cls(rotation=_rotmat_to_quat(np.column_stack([x, y, z])), translation=tuple(eye))


def _rotmat_to_quat(m: np.ndarray) -> Tuple[float, float, float, float]:
    trace = np.trace(m)
    if trace > 0:
        s = 2.0 * math.sqrt(1.0 + trace)
        q = (0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = ((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = ((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
    else:
        s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = ((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)
    return tuple(float(x) for x in q)


@dataclass
class Frame:
    """One posed, timestamped image with optional supervision planes."""
    image: np.ndarray
    intrinsics: CameraIntrinsics
    pose: CameraPose
    timestamp: float
    depth_target: Optional[np.ndarray] = None
    normal_target: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        expected = (self.intrinsics.height, self.intrinsics.width, 3)
        if self.image.shape != expected:
            raise DomainError(f"image shape {self.image.shape} does not match intrinsics {expected}")
        if not math.isfinite(self.timestamp):
            raise DomainError(f"timestamp must be finite, got {self.timestamp}")
        self.timestamp = float(self.timestamp)
        if self.depth_target is not None:
            self.depth_target = np.asarray(self.depth_target, dtype=np.float64)
            if self.depth_target.shape != expected[:2]:
                raise DomainError(f"depth target shape {self.depth_target.shape} != {expected[:2]}")
        if self.normal_target is not None:
            self.normal_target = np.asarray(self.normal_target, dtype=np.float64)
            if self.normal_target.shape != expected:
                raise DomainError(f"normal target shape {self.normal_target.shape} != {expected}")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != expected[:2]:
                raise DomainError(f"mask shape {self.mask.shape} != {expected[:2]}")


# ============================================================================
# RAYS AND PROJECTION
# ============================================================================

def camera_directions(intr: CameraIntrinsics) -> np.ndarray:
    """Unnormalised camera-frame ray directions (H, W, 3) through pixel centres."""
    u = (np.arange(intr.width, dtype=np.float64) + 0.5 - intr.cx) / intr.fx
    v = (np.arange(intr.height, dtype=np.float64) + 0.5 - intr.cy) / intr.fy
    uu, vv = np.meshgrid(u, v, indexing="xy")
    return np.stack([uu, vv, np.ones_like(uu)], axis=-1)


def pixel_rays(intr: CameraIntrinsics, pose: CameraPose) -> Tuple[np.ndarray, np.ndarray]:
    """
    World-space rays through every pixel centre.

    Returns:
        (origin (3,), directions (H, W, 3) of unit length)
    """
    dirs = camera_directions(intr) @ pose.rotation_matrix().T
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return pose.center, dirs


def plucker_rays(intr: CameraIntrinsics, pose: CameraPose) -> np.ndarray:
    """
    Plücker encoding of every pixel ray.

    Returns:
        (H, W, 6) array of (direction d, moment o × d)
    """
    origin, dirs = pixel_rays(intr, pose)
    moment = np.cross(np.broadcast_to(origin, dirs.shape), dirs)
    return np.concatenate([dirs, moment], axis=-1)


def world_to_camera(points: torch.Tensor, pose: CameraPose) -> torch.Tensor:
    """Transform world points (..., 3) into the camera frame."""
    rot = torch.as_tensor(pose.rotation_matrix(), dtype=points.dtype)
    center = torch.as_tensor(pose.center, dtype=points.dtype)
    return (points - center) @ rot


def project_points(
    points: torch.Tensor, intr: CameraIntrinsics, pose: CameraPose
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Project world points to pixel-index coordinates.

    A point on the ray of pixel (u, v) projects to exactly (u, v).

    Returns:
        (uv (..., 2), camera z (...))
    """
    cam = world_to_camera(torch.as_tensor(points, dtype=torch.float64), pose)
    z = cam[..., 2]
    u = intr.fx * cam[..., 0] / z + intr.cx - 0.5
    v = intr.fy * cam[..., 1] / z + intr.cy - 0.5
    return torch.stack((u, v), dim=-1), z
