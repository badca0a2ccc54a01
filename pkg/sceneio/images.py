"""
Image codecs for frames, render outputs and supervision planes.

PPM (binary P6) carries 8- or 16-bit colour, PFM carries 1- or 3-channel
float32 planes, PNG goes through imageio. Colour images are returned as
float64 in [0, 1]; PFM planes keep their values. Writes are atomic.
"""
import io
import logging
import re
from pathlib import Path
from typing import Union

import imageio.v3 as iio
import numpy as np

from sceneio.scene_file import atomic_write_bytes
from utils.errors import DomainError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_PPM_HEADER = re.compile(rb"\AP6(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)\s")


# ============================================================================
# PPM
# ============================================================================

def encode_ppm(image: np.ndarray) -> bytes:
    """8-bit binary PPM of an (H, W, 3) image in [0, 1]; values are clipped."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DomainError(f"PPM needs an (H, W, 3) image, got {image.shape}")
    height, width, _ = image.shape
    pixels = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    return f"P6\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes()


def decode_ppm(data: bytes) -> np.ndarray:
    match = _PPM_HEADER.match(data)
    if match is None:
        raise DomainError("not a binary PPM (P6) image")
    width, height, maxval = (int(g) for g in match.groups())
    if not 0 < maxval < 65536:
        raise DomainError(f"PPM maxval {maxval} out of range")
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    count = width * height * 3
    body = data[match.end():]
    if len(body) < count * dtype.itemsize:
        raise DomainError(f"PPM body holds {len(body)} bytes, needs {count * dtype.itemsize}")
    pixels = np.frombuffer(body, dtype=dtype, count=count).reshape(height, width, 3)
    return pixels.astype(np.float64) / maxval


# ============================================================================
# PFM
# ============================================================================

def encode_pfm(plane: np.ndarray) -> bytes:
    """Little-endian PFM of an (H, W) or (H, W, 3) float plane."""
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim == 3 and plane.shape[2] == 1:
        plane = plane[..., 0]
    if plane.ndim == 2:
        tag = "Pf"
    elif plane.ndim == 3 and plane.shape[2] == 3:
        tag = "PF"
    else:
        raise DomainError(f"PFM needs an (H, W) or (H, W, 3) plane, got {plane.shape}")
    height, width = plane.shape[:2]
    header = f"{tag}\n{width} {height}\n-1.0\n".encode("ascii")
    # rows are stored bottom to top
    return header + np.ascontiguousarray(plane[::-1], dtype="<f4").tobytes()


def decode_pfm(data: bytes) -> np.ndarray:
    stream = io.BytesIO(data)
    tag = stream.readline().strip()
    if tag not in (b"PF", b"Pf"):
        raise DomainError(f"not a PFM image (tag {tag!r})")
    try:
        width, height = (int(v) for v in stream.readline().split())
        scale = float(stream.readline().strip())
    except ValueError as e:
        raise DomainError(f"malformed PFM header: {e}") from None
    channels = 3 if tag == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    count = width * height * channels
    body = stream.read()
    if len(body) < 4 * count:
        raise DomainError(f"PFM body holds {len(body)} bytes, needs {4 * count}")
    values = np.frombuffer(body, dtype=dtype, count=count).astype(np.float64)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return values.reshape(shape)[::-1].copy()


# ============================================================================
# DISPATCH
# ============================================================================

def read_image(path: PathLike) -> np.ndarray:
    """
    Read a .ppm, .pfm or .png file.

    PPM and PNG colour images come back as (H, W, 3) in [0, 1]; greyscale PNGs
    are expanded to three channels. PFM planes come back unchanged.

    Raises:
        DomainError: On an unknown suffix or malformed file
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        return decode_ppm(path.read_bytes())
    if suffix == ".pfm":
        return decode_pfm(path.read_bytes())
    if suffix == ".png":
        pixels = iio.imread(path)
        scale = float(np.iinfo(pixels.dtype).max) if np.issubdtype(pixels.dtype, np.integer) else 1.0
        image = pixels.astype(np.float64) / scale
        if image.ndim == 2:
            image = np.repeat(image[..., None], 3, axis=-1)
        return image[..., :3]
    raise DomainError(f"unsupported image format {suffix!r} ({path})")


def write_image(path: PathLike, image: np.ndarray) -> None:
    """Write an image or plane, picking the codec from the suffix."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        data = encode_ppm(image)
    elif suffix == ".pfm":
        data = encode_pfm(image)
    elif suffix == ".png":
        pixels = np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)
        data = iio.imwrite("<bytes>", pixels, extension=".png")
    else:
        raise DomainError(f"unsupported image format {suffix!r} ({path})")
    atomic_write_bytes(path, data)
    logger.debug(f"wrote {path}")


def read_mask(path: PathLike) -> np.ndarray:
    """Boolean (H, W) mask: a pixel is set when its first channel exceeds 0.5."""
    image = read_image(path)
    if image.ndim == 3:
        image = image[..., 0]
    return image > 0.5
