"""Per-pixel input encoding of posed frames and patchification."""
import numpy as np
from einops import rearrange

from model.camera import Frame, plucker_rays
from utils.errors import DomainError

# rgb + timestamp + plucker (d, m)
ENCODED_CHANNELS = 10


def timestamp_image(frame: Frame) -> np.ndarray:
    """Constant (H, W, 1) plane holding the frame timestamp."""
    return np.full(frame.intrinsics.shape + (1,), frame.timestamp, dtype=np.float64)


def encode_frame(frame: Frame) -> np.ndarray:
    """
    Concatenate image, timestamp and Plücker planes.

    Returns:
        (H, W, 10) array: rgb, timestamp, ray direction, ray moment
    """
    return np.concatenate(
        [frame.image, timestamp_image(frame), plucker_rays(frame.intrinsics, frame.pose)],
        axis=-1,
    )


def patchify(planes: np.ndarray, p: int) -> np.ndarray:
    """
    Cut an (H, W, C) or (H, W) plane into non-overlapping p×p patches.

    Patches are ordered row-major over the patch grid.

    Returns:
        (H/p * W/p, p, p, C) array, or (H/p * W/p, p, p) for 2D input

    Raises:
        DomainError: If p < 1 or H, W are not divisible by p
    """
    if p < 1:
        raise DomainError(f"patch size must be >= 1, got {p}")
    h, w = planes.shape[:2]
    if h % p or w % p:
        pad_h = (-h) % p
        pad_w = (-w) % p
        raise DomainError(
            f"image {w}x{h} is not divisible by patch size {p}; "
            f"pad by {pad_w} columns and {pad_h} rows"
        )
    if planes.ndim == 2:
        return rearrange(planes, "(gh ph) (gw pw) -> (gh gw) ph pw", ph=p, pw=p)
    return rearrange(planes, "(gh ph) (gw pw) c -> (gh gw) ph pw c", ph=p, pw=p)
