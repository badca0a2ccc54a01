"""
Training losses for per-scene fitting.

The photometric term is a per-frame MSE averaged over frames. Structural
similarity enters the total as (1 - SSIM). Motion and lifespan regularisers
push Gaussians towards being static and long-lived, and optional depth and
normal targets add pseudo-supervision. Every weight except the MSE term is
ramped linearly from zero over the warm-up steps.

A frame mask limits the MSE, depth and normal terms to its set pixels;
SSIM always uses the whole image.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel, Field

from config.settings import load_yaml_config
from model.camera import Frame
from model.gaussian import DTYPE, SceneLike, as_tensors
from render.types import RenderPlanes
from utils.errors import DomainError

logger = logging.getLogger(__name__)

ImageLike = Union[np.ndarray, torch.Tensor]
PerceptualLoss = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

# Terms scaled by the warm-up factor, in report order.
WARMED_TERMS = ("lpips", "ssim", "velocity", "angular_velocity", "lifespan", "depth", "normal")


# ============================================================================
# CONFIGURATION
# ============================================================================

class LossWeights(BaseModel):
    """Final loss weights and the length of their linear warm-up."""

    model_config = {"frozen": True}

    lpips: float = Field(default=2.0, ge=0.0)
    ssim: float = Field(default=0.2, ge=0.0)
    velocity: float = Field(default=1.0, ge=0.0)
    angular_velocity: float = Field(default=1.0, ge=0.0)
    lifespan: float = Field(default=1.0, ge=0.0)
    depth: float = Field(default=0.1, ge=0.0)
    normal: float = Field(default=0.01, ge=0.0)
    warmup_steps: int = Field(default=2500, ge=0)

    @classmethod
    def from_yaml(cls, path: Optional[Path] = None) -> "LossWeights":
        """Weights from the `loss` section of the default config merged with `path`."""
        return cls(**load_yaml_config(path).get("loss", {}))


@dataclass
class LossBreakdown:
    """Unweighted terms, warmed weights and the total of one loss evaluation."""
    terms: Dict[str, torch.Tensor]
    weights: Dict[str, float]
    total: torch.Tensor
    disabled: List[str] = field(default_factory=list)

    @property
    def value(self) -> float:
        return float(self.total.detach())

    def rescore(self, weights: LossWeights) -> float:
        """Total of the same terms under the final (unwarmed) weights."""
        total = float(self.terms["mse"].detach())
        for name in WARMED_TERMS:
            weight = getattr(weights, name)
            if weight != 0.0:
                total += weight * float(self.terms[name].detach())
        return total

    def to_dict(self) -> Dict:
        return {
            "total": self.value,
            "terms": {name: float(term.detach()) for name, term in self.terms.items()},
            "weights": dict(self.weights),
            "disabled": list(self.disabled),
        }


# ============================================================================
# HELPERS
# ============================================================================

def _tensor(x: ImageLike) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.to(DTYPE)
    return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=DTYPE)


def _frames(x) -> List[torch.Tensor]:
    """A list or tuple is a sequence of frames; anything else is one frame."""
    if isinstance(x, (list, tuple)):
        return [_tensor(item) for item in x]
    return [_tensor(x)]


def _masks(masks, count: int) -> List[Optional[torch.Tensor]]:
    if masks is None:
        return [None] * count
    items = list(masks) if isinstance(masks, (list, tuple)) else [masks]
    if len(items) != count:
        raise DomainError(f"{len(items)} masks for {count} frames")
    return [None if m is None else torch.as_tensor(np.asarray(m, dtype=bool)) for m in items]


def _framewise_mse(rendered, target, masks=None) -> torch.Tensor:
    """Per-frame MSE averaged over frames; a frame's mask restricts it to the set pixels."""
    a, b = _frames(rendered), _frames(target)
    if len(a) != len(b):
        raise DomainError(f"{len(a)} rendered frames against {len(b)} targets")
    if not a:
        raise DomainError("no frames to compare")
    per_frame = []
    for x, y, m in zip(a, b, _masks(masks, len(a))):
        if x.shape != y.shape:
            raise DomainError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
        if m is None:
            per_frame.append(((x - y) ** 2).mean())
            continue
        if tuple(m.shape) != tuple(x.shape[:2]):
            raise DomainError(f"mask shape {tuple(m.shape)} does not match image {tuple(x.shape[:2])}")
        weight = m.to(DTYPE).reshape(m.shape + (1,) * (x.dim() - 2)).expand_as(x)
        # an empty mask contributes zero
        per_frame.append((weight * (x - y) ** 2).sum() / weight.sum().clamp(min=1.0))
    return torch.stack(per_frame).mean()


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> torch.Tensor:
    coords = torch.arange(size, dtype=DTYPE) - size // 2
    gauss = torch.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    gauss = gauss / gauss.sum()
    return gauss[:, None] @ gauss[None, :]


# ============================================================================
# PHOTOMETRIC TERMS
# ============================================================================

def mse_loss(rendered, target, mask=None) -> torch.Tensor:
    """
    Mean over frames of the per-frame mean squared error.

    Args:
        rendered: One image or a list of images
        target: Matching image(s)
        mask: Optional (H, W) boolean mask, or one mask (or None) per frame

    Raises:
        DomainError: On a frame count or shape mismatch
    """
    return _framewise_mse(rendered, target, mask)


def ssim(a: ImageLike, b: ImageLike) -> torch.Tensor:
    """
    Mean local SSIM of two images in [0, 1].

    Uses an 11x11 Gaussian window (sigma 1.5) without padding, K1=0.01,
    K2=0.03 and a dynamic range of 1. Channels are treated independently and
    averaged.

    Args:
        a: (H, W) or (H, W, C) image
        b: Image of the same shape

    Returns:
        0-dim tensor in [-1, 1]

    Raises:
        DomainError: If the shapes differ or the image is smaller than the window
    """
    x, y = _tensor(a), _tensor(b)
    if x.shape != y.shape:
        raise DomainError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.dim() == 2:
        x, y = x[..., None], y[..., None]
    if x.dim() != 3:
        raise DomainError(f"expected an (H, W) or (H, W, C) image, got {tuple(x.shape)}")
    height, width, channels = x.shape
    if height < SSIM_WINDOW or width < SSIM_WINDOW:
        raise DomainError(f"image {width}x{height} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")

    window = _gaussian_window().expand(channels, 1, SSIM_WINDOW, SSIM_WINDOW)
    x = x.permute(2, 0, 1)[None]
    y = y.permute(2, 0, 1)[None]

    def blur(img):
        return F.conv2d(img, window, groups=channels)

    mu_x, mu_y = blur(x), blur(y)
    mu_xx, mu_yy, mu_xy = mu_x * mu_x, mu_y * mu_y, mu_x * mu_y
    var_x = blur(x * x) - mu_xx
    var_y = blur(y * y) - mu_yy
    cov = blur(x * y) - mu_xy

    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    ssim_map = ((2.0 * mu_xy + c1) * (2.0 * cov + c2)) / ((mu_xx + mu_yy + c1) * (var_x + var_y + c2))
    return ssim_map.mean()


# ============================================================================
# REGULARISERS AND GUIDANCE
# ============================================================================

def reg_losses(scene: SceneLike):
    """
    Motion and lifespan regularisers.

    Returns:
        (L_v, L_w, L_l): mean L1 norm of velocities, mean L1 norm of angular
        velocities and mean reciprocal lifespan, each a 0-dim tensor; zeros
        for an empty scene
    """
    st = as_tensors(scene)
    if st.count == 0:
        zero = torch.zeros((), dtype=DTYPE)
        return zero, zero, zero
    l_v = st.velocity.abs().sum(dim=-1).mean()
    l_w = st.ang_velocity.abs().sum(dim=-1).mean()
    l_l = (1.0 / st.lifespan).mean()
    return l_v, l_w, l_l


def expert_losses(rendered_depth, target_depth, rendered_normal, target_normal):
    """
    Depth and normal pseudo-supervision terms.

    Returns:
        (L_D, L_N) as framewise mean squared errors
    """
    return _framewise_mse(rendered_depth, target_depth), _framewise_mse(rendered_normal, target_normal)


def warmup(step: int, weights: LossWeights) -> Dict[str, float]:
    """
    Warmed weights at a training step.

    Every weight except the MSE term is scaled by min(1, step / warmup_steps).

    Raises:
        DomainError: If step is negative
    """
    if step < 0:
        raise DomainError(f"step must be >= 0, got {step}")
    factor = 1.0 if weights.warmup_steps == 0 else min(1.0, step / weights.warmup_steps)
    return {name: factor * getattr(weights, name) for name in WARMED_TERMS}


# ============================================================================
# TOTAL
# ============================================================================

def total_loss(
    rendered: Sequence[RenderPlanes],
    targets: Sequence[Frame],
    scene: SceneLike,
    step: int,
    weights: Optional[LossWeights] = None,
    perceptual: Optional[PerceptualLoss] = None,
) -> LossBreakdown:
    """
    Weighted training loss over a batch of frames.

    Args:
        rendered: One RenderPlanes per target frame
        targets: Target frames; depth and normal targets are optional per frame
        scene: The scene that was rendered (for the regularisers)
        step: Training step, drives the warm-up
        weights: Final weights (defaults when None)
        perceptual: Optional image-pair loss for the perceptual slot

    Returns:
        LossBreakdown whose total stays attached to the autograd graph
    """
    weights = weights or LossWeights()
    if len(rendered) != len(targets):
        raise DomainError(f"{len(rendered)} renders for {len(targets)} target frames")
    if not targets:
        raise DomainError("total_loss needs at least one frame")

    colors = [planes.color for planes in rendered]
    images = [frame.image for frame in targets]
    zero = torch.zeros((), dtype=DTYPE)
    disabled = []

    masks = [frame.mask for frame in targets]
    terms: Dict[str, torch.Tensor] = {"mse": mse_loss(colors, images, masks)}

    if perceptual is not None:
        terms["lpips"] = torch.stack(
            [perceptual(c, _tensor(img)) for c, img in zip(colors, images)]
        ).mean()
    else:
        terms["lpips"] = zero
        disabled.append("lpips")

    if min(min(img.shape[:2]) for img in images) >= SSIM_WINDOW:
        terms["ssim"] = 1.0 - torch.stack([ssim(c, img) for c, img in zip(colors, images)]).mean()
    else:
        terms["ssim"] = zero
        disabled.append("ssim")
    terms["velocity"], terms["angular_velocity"], terms["lifespan"] = reg_losses(scene)

    with_depth = [(p.depth, f.depth_target, f.mask) for p, f in zip(rendered, targets) if f.depth_target is not None]
    with_normal = [(p.normal, f.normal_target, f.mask) for p, f in zip(rendered, targets) if f.normal_target is not None]
    if with_depth:
        depths, depth_targets, depth_masks = (list(column) for column in zip(*with_depth))
        terms["depth"] = _framewise_mse(depths, depth_targets, depth_masks)
    else:
        terms["depth"] = zero
        disabled.append("depth")
    if with_normal:
        normals, normal_targets, normal_masks = (list(column) for column in zip(*with_normal))
        terms["normal"] = _framewise_mse(normals, normal_targets, normal_masks)
    else:
        terms["normal"] = zero
        disabled.append("normal")

    warmed = warmup(step, weights)
    total = terms["mse"]
    for name in WARMED_TERMS:
        if warmed[name] != 0.0:
            total = total + warmed[name] * terms[name]

    if not math.isfinite(float(total.detach())):
        logger.debug(f"non-finite loss at step {step}: {[k for k, v in terms.items() if not torch.isfinite(v)]}")
    return LossBreakdown(terms=terms, weights=warmed, total=total, disabled=disabled)
