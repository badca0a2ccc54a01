"""
Dataset manifests: JSON lists of posed, timestamped frames.

Paths in a manifest are resolved against the manifest's directory.
"""
import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from model.camera import CameraIntrinsics, CameraPose, Frame
from sceneio.images import read_image, read_mask, write_image
from sceneio.scene_file import atomic_write_bytes
from utils.errors import DomainError, ManifestError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


# ============================================================================
# Pydantic Models for Manifest Validation
# ============================================================================

class IntrinsicsEntry(BaseModel):
    """Pinhole intrinsics of one frame."""
    fx: float = Field(..., gt=0)
    fy: float = Field(..., gt=0)
    cx: float
    cy: float
    width: int = Field(..., gt=0)
    height: int = Field(..., gt=0)

    def to_intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(**self.model_dump())

    @classmethod
    def from_intrinsics(cls, intr: CameraIntrinsics) -> "IntrinsicsEntry":
        return cls(fx=intr.fx, fy=intr.fy, cx=intr.cx, cy=intr.cy, width=intr.width, height=intr.height)


class PoseEntry(BaseModel):
    """World-from-camera pose: unit quaternion (w, x, y, z) and translation."""
    qw: float = 1.0
    qx: float = 0.0
    qy: float = 0.0
    qz: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0

    def to_pose(self) -> CameraPose:
        return CameraPose(rotation=(self.qw, self.qx, self.qy, self.qz), translation=(self.tx, self.ty, self.tz))

    @classmethod
    def from_pose(cls, pose: CameraPose) -> "PoseEntry":
        qw, qx, qy, qz = pose.rotation
        tx, ty, tz = pose.translation
        return cls(qw=qw, qx=qx, qy=qy, qz=qz, tx=tx, ty=ty, tz=tz)


class FrameEntry(BaseModel):
    """One manifest frame."""
    image_path: str
    timestamp_s: float
    intrinsics: IntrinsicsEntry
    pose: PoseEntry = Field(default_factory=PoseEntry)
    depth_path: Optional[str] = None
    normal_path: Optional[str] = None
    mask_path: Optional[str] = None

    def paths(self) -> List[str]:
        return [p for p in (self.image_path, self.depth_path, self.normal_path, self.mask_path) if p]


class DatasetManifest(BaseModel):
    """Ordered frame list; timestamps must strictly increase."""
    frames: List[FrameEntry]

    @model_validator(mode="after")
    def _check_timestamps(self) -> "DatasetManifest":
        times = [f.timestamp_s for f in self.frames]
        for i in range(1, len(times)):
            if not times[i] > times[i - 1]:
                raise ValueError(
                    f"timestamps must strictly increase: frame {i} has {times[i]} after {times[i - 1]}"
                )
        return self


# ============================================================================
# LOADING
# ============================================================================

def _depth_plane(image: np.ndarray) -> np.ndarray:
    return image[..., 0] if image.ndim == 3 else image


def _load_frame(entry: FrameEntry, root: Path) -> Frame:
    return Frame(
        image=read_image(root / entry.image_path),
        intrinsics=entry.intrinsics.to_intrinsics(),
        pose=entry.pose.to_pose(),
        timestamp=entry.timestamp_s,
        depth_target=_depth_plane(read_image(root / entry.depth_path)) if entry.depth_path else None,
        normal_target=read_image(root / entry.normal_path) if entry.normal_path else None,
        mask=read_mask(root / entry.mask_path) if entry.mask_path else None,
    )


def parse_manifest(text: str) -> DatasetManifest:
    """
    Validate manifest JSON.

    Raises:
        ManifestError: On malformed JSON or invalid content
    """
    try:
        return DatasetManifest.model_validate(json.loads(text))
    except json.JSONDecodeError as e:
        raise ManifestError(f"manifest is not valid JSON: {e}") from None
    except ValidationError as e:
        raise ManifestError(f"invalid manifest: {e}") from None


def load_manifest(path: PathLike) -> Tuple[DatasetManifest, List[Frame]]:
    """
    Load a manifest and decode every frame it references.

    Args:
        path: Manifest JSON file

    Returns:
        (manifest, frames) with frames in timestamp order

    Raises:
        ManifestError: If the manifest is invalid, a file is missing or an
            image does not match its intrinsics
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    manifest = parse_manifest(path.read_text(encoding="utf-8"))

    root = path.parent
    missing = [p for entry in manifest.frames for p in entry.paths() if not (root / p).is_file()]
    if missing:
        raise ManifestError(f"manifest references missing files: {', '.join(missing)}")

    frames = []
    for i, entry in enumerate(manifest.frames):
        try:
            frames.append(_load_frame(entry, root))
        except DomainError as e:
            raise ManifestError(f"frame {i} ({entry.image_path}): {e}") from None

    logger.info(f"loaded {len(frames)} frames from {path}")
    return manifest, frames


def write_dataset(frames: Sequence[Frame], directory: PathLike, stem: str = "frame") -> Path:
    """
    Write frames as images plus a manifest.json.

    Colour goes to PPM, depth and normal targets to PFM and masks to PPM.

    Returns:
        Path of the written manifest
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, frame in enumerate(frames):
        name = f"{stem}_{i:04d}"
        entry = FrameEntry(
            image_path=f"{name}.ppm",
            timestamp_s=frame.timestamp,
            intrinsics=IntrinsicsEntry.from_intrinsics(frame.intrinsics),
            pose=PoseEntry.from_pose(frame.pose),
        )
        write_image(directory / entry.image_path, frame.image)
        if frame.depth_target is not None:
            entry.depth_path = f"{name}.depth.pfm"
            write_image(directory / entry.depth_path, frame.depth_target)
        if frame.normal_target is not None:
            entry.normal_path = f"{name}.normal.pfm"
            write_image(directory / entry.normal_path, frame.normal_target)
        if frame.mask is not None:
            entry.mask_path = f"{name}.mask.ppm"
            write_image(directory / entry.mask_path, np.repeat(frame.mask[..., None], 3, axis=-1).astype(np.float64))
        entries.append(entry)

    manifest = DatasetManifest(frames=entries)
    target = directory / "manifest.json"
    atomic_write_bytes(target, manifest.model_dump_json(indent=2).encode("utf-8"))
    logger.info(f"wrote {len(entries)} frames to {directory}")
    return target
