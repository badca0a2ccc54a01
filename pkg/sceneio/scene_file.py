"""
Binary scene files.

Layout (little-endian):
    magic "4DGT" | u32 version | u64 count | u64 reserved
    float32 arrays, field by field: position[3n] scale[2n] orientation[4n]
    opacity[n] color[3n] t_center[n] lifespan[n] velocity[3n] ang_velocity[3n]
    f64 time_base
"""
import logging
import os
import struct
import tempfile
from pathlib import Path
from typing import Union

import numpy as np

from model.gaussian import FIELD_SHAPES, GaussianScene
from utils.errors import SceneFormatError

logger = logging.getLogger(__name__)

MAGIC = b"4DGT"
VERSION = 1
HEADER = struct.Struct("<4sIQQ")
FOOTER = struct.Struct("<d")
FLOATS_PER_GAUSSIAN = sum(int(np.prod(shape)) for shape in FIELD_SHAPES.values())

PathLike = Union[str, Path]


def scene_file_size(count: int) -> int:
    """Exact byte size of a scene file holding `count` Gaussians."""
    return HEADER.size + 4 * FLOATS_PER_GAUSSIAN * count + FOOTER.size


def encode_scene(scene: GaussianScene) -> bytes:
    parts = [HEADER.pack(MAGIC, VERSION, scene.count, 0)]
    for name in FIELD_SHAPES:
        parts.append(np.ascontiguousarray(getattr(scene, name), dtype="<f4").tobytes())
    parts.append(FOOTER.pack(scene.time_base))
    return b"".join(parts)


def decode_scene(data: bytes) -> GaussianScene:
    """
    Parse scene file bytes.

    Raises:
        SceneFormatError: On a truncated file, bad magic, unknown version or size mismatch
    """
    if len(data) < HEADER.size:
        raise SceneFormatError(f"file holds {len(data)} bytes, header needs {HEADER.size}", offset=len(data))
    magic, version, count, _ = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise SceneFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise SceneFormatError(f"unsupported version {version}", offset=4)
    expected = scene_file_size(count)
    if len(data) != expected:
        offset = min(len(data), expected)
        raise SceneFormatError(f"file holds {len(data)} bytes, {count} Gaussians need {expected}", offset=offset)

    arrays = {}
    offset = HEADER.size
    for name, trailing in FIELD_SHAPES.items():
        n = count * int(np.prod(trailing))
        values = np.frombuffer(data, dtype="<f4", count=n, offset=offset)
        arrays[name] = values.astype(np.float64).reshape((count,) + trailing)
        offset += 4 * n
    (time_base,) = FOOTER.unpack_from(data, offset)
    return GaussianScene(**arrays, time_base=time_base)


def atomic_write_bytes(path: PathLike, data: bytes) -> None:
    """Write to a temporary file next to `path`, then rename over it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_scene(scene: GaussianScene, path: PathLike) -> None:
    """Write a scene file atomically."""
    atomic_write_bytes(path, encode_scene(scene))
    logger.info(f"wrote {scene.count} Gaussians to {path}")


def read_scene(path: PathLike) -> GaussianScene:
    """
    Read a scene file.

    Raises:
        SceneFormatError: If the file is malformed
    """
    data = Path(path).read_bytes()
    scene = decode_scene(data)
    logger.debug(f"read {scene.count} Gaussians from {path}")
    return scene
