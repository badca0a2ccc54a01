"""
Evaluation metrics: PSNR, SSIM, depth RMSE and normal angle error.
"""
import math
from typing import Dict, Optional

import numpy as np
import torch

from config.settings import get_settings
from losses.losses import ssim
from utils.errors import DomainError


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DomainError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def _valid(shape, mask: Optional[np.ndarray]) -> np.ndarray:
    if mask is None:
        return np.ones(shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != shape:
        raise DomainError(f"mask shape {mask.shape} does not match image {shape}")
    return mask


def psnr(a, b, peak: float = 1.0, cap: Optional[float] = None, mask: Optional[np.ndarray] = None) -> float:
    """
    Peak signal-to-noise ratio in dB, over the masked pixels when a mask is given.

    Identical images have zero error and report `cap` (the psnr_cap setting
    when None).

    Raises:
        DomainError: If the mask selects no pixel
    """
    a, b = _pair(a, b)
    cap = get_settings().psnr_cap if cap is None else cap
    valid = _valid(a.shape[:2], mask)
    if not valid.any():
        raise DomainError("psnr mask selects no pixels")
    mse = float(np.mean((a[valid] - b[valid]) ** 2))
    if mse == 0.0:
        return cap
    return 10.0 * math.log10(peak * peak / mse)


def ssim_index(a, b) -> float:
    """SSIM of two images as a float."""
    with torch.no_grad():
        return float(ssim(a, b))


def depth_rmse(pred, target, mask: Optional[np.ndarray] = None) -> float:
    """
    Root mean squared depth error over valid pixels.

    A pixel is valid when the mask (if any) is set and the target depth is positive.

    Raises:
        DomainError: If no pixel is valid
    """
    pred, target = _pair(pred, target)
    valid = _valid(target.shape, mask) & (target > 0)
    if not valid.any():
        raise DomainError("depth_rmse has no valid pixels")
    return float(np.sqrt(np.mean((pred[valid] - target[valid]) ** 2)))


def normal_angle_deg(pred, target, mask: Optional[np.ndarray] = None) -> float:
    """
    Mean angle between predicted and target unit normals, in degrees.

    Pixels whose target normal is zero (background) are skipped.

    Raises:
        DomainError: If no pixel is valid
    """
    pred, target = _pair(pred, target)
    if pred.shape[-1] != 3:
        raise DomainError(f"normal planes need 3 channels, got {pred.shape}")
    valid = _valid(target.shape[:-1], mask) & (np.linalg.norm(target, axis=-1) > 0)
    if not valid.any():
        raise DomainError("normal_angle_deg has no valid pixels")
    cosine = np.clip(np.sum(pred[valid] * target[valid], axis=-1), -1.0, 1.0)
    return float(np.degrees(np.arccos(cosine)).mean())


def evaluate_frame(
    pred_color,
    target_color,
    pred_depth=None,
    target_depth=None,
    pred_normal=None,
    target_normal=None,
    mask: Optional[np.ndarray] = None,
) -> Dict[str, Optional[float]]:
    """
    Metrics of one frame; depth and normal entries are None without both planes.

    PSNR and the depth and normal errors use the masked pixels; SSIM always
    uses the full image.
    """
    report: Dict[str, Optional[float]] = {
        "psnr": psnr(pred_color, target_color, mask=mask),
        "ssim": ssim_index(pred_color, target_color),
        "depth_rmse": None,
        "normal_angle_deg": None,
    }
    if pred_depth is not None and target_depth is not None:
        report["depth_rmse"] = depth_rmse(pred_depth, target_depth, mask)
    if pred_normal is not None and target_normal is not None:
        report["normal_angle_deg"] = normal_angle_deg(pred_normal, target_normal, mask)
    return report
