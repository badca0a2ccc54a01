"""
Per-scene fitting of a GaussianScene to posed, timestamped frames.

The loss is losses.total_loss over renders of the decoded parameters, and
gradients come from torch autograd through the temporal model, the
rasterizer and the losses. Sort order is fixed per render, so the
composite is differentiated piecewise.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import torch
from pydantic import BaseModel, Field

from config.settings import load_yaml_config
from fitting.params import GROUPS, ParamVector, decode_params, decode_tensors, encode_params
from losses.losses import LossBreakdown, LossWeights, PerceptualLoss, total_loss
from model.camera import CameraIntrinsics, CameraPose, Frame
from model.gaussian import GaussianScene, SceneLike
from render.rasterizer import render, render_differentiable
from render.types import RenderConfig
from utils.errors import DomainError, FitDivergenceError

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[int, float], None]
Objective = Callable[[np.ndarray], float]

FD_STEP = 1e-4


# ============================================================================
# CONFIGURATION
# ============================================================================

class FitConfig(BaseModel):
    """Optimiser, schedule and loss settings of one fit."""

    model_config = {"frozen": True}

    iterations: int = Field(default=2000, ge=0)
    learning_rate: float = Field(default=1e-2, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    seed: int = 0
    lr_schedule: Literal["constant", "warmup_cosine"] = "constant"
    lr_warmup_steps: int = Field(default=100, ge=0)
    lr_min_ratio: float = Field(default=0.01, ge=0.0, le=1.0)
    lr_scales: Dict[str, float] = Field(default_factory=dict)
    tile_size: Optional[int] = Field(default=None, ge=1)
    log_every: int = Field(default=100, ge=1)
    weights: LossWeights = Field(default_factory=LossWeights)
    render: RenderConfig = Field(default_factory=RenderConfig)

    @classmethod
    def from_yaml(cls, path: Optional[Path] = None, **overrides) -> "FitConfig":
        """Build from the fit, loss and render sections of the merged YAML config."""
        config = load_yaml_config(path)
        values = dict(config.get("fit", {}))
        values["weights"] = LossWeights(**config.get("loss", {}))
        values["render"] = RenderConfig(**config.get("render", {}))
        values.update(overrides)
        return cls(**values)

    def render_config(self, intr: CameraIntrinsics) -> RenderConfig:
        """Render options for a training frame; no tile size means one tile per frame."""
        tile = self.tile_size or max(intr.width, intr.height)
        return self.render.model_copy(update={"tile_size": tile, "workers": 1})

    def lr_factor(self, step: int) -> float:
        """Learning-rate multiplier at an optimiser step."""
        if self.lr_schedule == "constant":
            return 1.0
        if step < self.lr_warmup_steps:
            return (step + 1) / self.lr_warmup_steps
        span = max(1, self.iterations - self.lr_warmup_steps)
        progress = min(1.0, (step - self.lr_warmup_steps) / span)
        return self.lr_min_ratio + (1.0 - self.lr_min_ratio) * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class FitResult:
    """Outcome of fit()."""
    scene: GaussianScene
    loss_trace: List[float] = field(default_factory=list)
    score_trace: List[float] = field(default_factory=list)
    best_trace: List[float] = field(default_factory=list)
    best_iteration: Optional[int] = None
    best_breakdown: Optional[LossBreakdown] = None

    @property
    def best_loss(self) -> Optional[float]:
        return self.best_trace[-1] if self.best_trace else None

    def to_dict(self) -> Dict:
        return {
            "iterations": len(self.loss_trace),
            "best_iteration": self.best_iteration,
            "best_loss": self.best_loss,
            "loss_trace": self.loss_trace,
            "score_trace": self.score_trace,
            "best_trace": self.best_trace,
            "best_breakdown": self.best_breakdown.to_dict() if self.best_breakdown else None,
        }


# ============================================================================
# LOSS AND GRADIENT
# ============================================================================

def _breakdown(
    scene_t: SceneLike,
    frames: Sequence[Frame],
    cfg: FitConfig,
    step: int,
    perceptual: Optional[PerceptualLoss] = None,
) -> LossBreakdown:
    planes = [
        render_differentiable(scene_t, f.intrinsics, f.pose, f.timestamp, cfg.render_config(f.intrinsics))
        for f in frames
    ]
    return total_loss(planes, frames, scene_t, step, cfg.weights, perceptual)


def _final_step(cfg: FitConfig, step: Optional[int]) -> int:
    return cfg.weights.warmup_steps if step is None else step


def evaluate_loss(pv: ParamVector, frames: Sequence[Frame], cfg: FitConfig, step: Optional[int] = None) -> float:
    """Loss of a parameter vector without gradients; final weights when step is None."""
    if not frames:
        raise DomainError("need at least one frame")
    with torch.no_grad():
        return _breakdown(decode_tensors(pv), frames, cfg, _final_step(cfg, step)).value


def loss_and_grad(
    pv: ParamVector,
    frames: Sequence[Frame],
    cfg: FitConfig,
    step: Optional[int] = None,
) -> Tuple[float, ParamVector]:
    """
    Loss and its exact reverse-mode gradient with respect to pv.

    Args:
        pv: Parameters to evaluate (left untouched)
        frames: Target frames, each rendered at its own camera and timestamp
        cfg: Fit settings (weights, render options)
        step: Warm-up step; the final weights are used when None

    Returns:
        (loss, gradient) with the gradient laid out like pv
    """
    if not frames:
        raise DomainError("need at least one frame")
    leaves = pv.detach().requires_grad_(True)
    with torch.enable_grad():
        breakdown = _breakdown(decode_tensors(leaves), frames, cfg, _final_step(cfg, step))
        if breakdown.total.requires_grad:
            breakdown.total.backward()

    grad = ParamVector.zeros_like(leaves)
    for name, t in leaves.items():
        if t.grad is not None:
            setattr(grad, name, t.grad.detach().clone())
    return breakdown.value, grad


def finite_diff_grad(
    pv: ParamVector,
    frames: Sequence[Frame],
    cfg: FitConfig,
    indices: Sequence[int],
    step: Optional[int] = None,
    h: float = FD_STEP,
    objective: Optional[Objective] = None,
) -> np.ndarray:
    """
    Central-difference gradient entries at flat parameter indices.

    Each index uses the step h * max(1, |x|).

    Args:
        pv: Parameters at which to differentiate
        frames: Target frames
        cfg: Fit settings
        indices: Positions in pv.flatten()
        step: Warm-up step; final weights when None
        h: Relative step size
        objective: Replaces the rendered loss with a function of the flat vector

    Returns:
        Array of derivative estimates, one per index
    """
    x = pv.flatten()
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= x.size):
        raise DomainError(f"indices must lie in [0, {x.size})")

    if objective is None:
        def objective(flat: np.ndarray) -> float:
            return evaluate_loss(pv.with_flat(flat), frames, cfg, step)

    grads = np.empty(indices.size)
    for k, i in enumerate(indices):
        delta = h * max(1.0, abs(x[i]))
        plus, minus = x.copy(), x.copy()
        plus[i] += delta
        minus[i] -= delta
        grads[k] = (objective(plus) - objective(minus)) / (2.0 * delta)
    return grads


# ============================================================================
# OPTIMISATION
# ============================================================================

def _first_bad_group(pv: ParamVector) -> Optional[str]:
    for name, t in pv.items():
        if not torch.isfinite(t.detach()).all():
            return name
    for name, t in pv.items():
        if t.grad is not None and not torch.isfinite(t.grad).all():
            return name
    return None


def fit(
    initial: GaussianScene,
    frames: Sequence[Frame],
    cfg: Optional[FitConfig] = None,
    progress: Optional[ProgressCallback] = None,
    perceptual: Optional[PerceptualLoss] = None,
) -> FitResult:
    """
    Fit a scene to frames with Adam on the unconstrained parameters.

    The loss weights warm up with the iteration count, so the optimised loss
    of different iterations is not comparable. Each iterate is also scored
    under the final weights (score_trace) and the returned scene is the
    iterate with the lowest score.

    Args:
        initial: Starting scene
        frames: Target frames
        cfg: Fit settings (defaults when None)
        progress: Called with (iteration, loss) after every iteration
        perceptual: Optional perceptual loss plug-in

    Returns:
        FitResult with the best scene and the loss traces

    Raises:
        DomainError: If there are no frames
        FitDivergenceError: If the loss becomes non-finite
    """
    cfg = cfg or FitConfig()
    if not frames:
        raise DomainError("need at least one frame")
    if cfg.iterations == 0:
        return FitResult(scene=initial)

    torch.manual_seed(cfg.seed)
    pv = encode_params(initial).requires_grad_(True)
    groups = [
        {"params": [t], "lr": cfg.learning_rate * cfg.lr_scales.get(name, 1.0), "name": name}
        for name, t in pv.items()
    ]
    optimizer = torch.optim.Adam(groups, lr=cfg.learning_rate, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps)
    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, cfg.lr_factor)

    logger.info(f"fitting {initial.count} Gaussians to {len(frames)} frames for {cfg.iterations} iterations")
    result = FitResult(scene=initial)
    best_score = math.inf
    best_state: List[torch.Tensor] = []

    for iteration in range(cfg.iterations):
        optimizer.zero_grad()
        breakdown = _breakdown(decode_tensors(pv), frames, cfg, iteration, perceptual)
        value = breakdown.value
        if not math.isfinite(value):
            group = _first_bad_group(pv)
            logger.error(f"non-finite loss at iteration {iteration} (group: {group})")
            raise FitDivergenceError(f"loss became {value} at iteration {iteration}; first bad group: {group}", group)

        if breakdown.total.requires_grad:
            breakdown.total.backward()
        group = _first_bad_group(pv)
        if group is not None:
            logger.error(f"non-finite gradient at iteration {iteration} in {group}")
            raise FitDivergenceError(f"non-finite gradient at iteration {iteration} in {group}", group)

        score = breakdown.rescore(cfg.weights)
        if score < best_score:
            best_score = score
            best_state = [t.detach().clone() for t in pv.tensors()]
            result.best_iteration = iteration
            result.best_breakdown = breakdown
        result.loss_trace.append(value)
        result.score_trace.append(score)
        result.best_trace.append(best_score)

        optimizer.step()
        scheduler.step()

        if progress is not None:
            progress(iteration, value)
        if iteration % cfg.log_every == 0:
            logger.debug(f"iteration {iteration}: loss {value:.6g}, score {score:.6g} (best {best_score:.6g})")

    best = ParamVector(**dict(zip(GROUPS, best_state)), time_base=pv.time_base)
    result.scene = decode_params(best)
    logger.info(f"fit finished: best score {best_score:.6g} at iteration {result.best_iteration}")
    return result


# ============================================================================
# SYNTHETIC DATA
# ============================================================================

def synthesize_frames(
    scene: SceneLike,
    cameras: Sequence[Tuple[CameraIntrinsics, CameraPose]],
    timestamps: Sequence[float],
    cfg: Optional[RenderConfig] = None,
    with_depth: bool = True,
    with_normal: bool = True,
) -> List[Frame]:
    """
    Render a scene into target frames.

    A single camera is reused for every timestamp; otherwise cameras and
    timestamps pair up one to one.
    """
    if len(cameras) == 1:
        cameras = list(cameras) * len(timestamps)
    if len(cameras) != len(timestamps):
        raise DomainError(f"{len(cameras)} cameras for {len(timestamps)} timestamps")

    frames = []
    for (intr, pose), t in zip(cameras, timestamps):
        out = render(scene, intr, pose, t, cfg)
        frames.append(
            Frame(
                image=out.color,
                intrinsics=intr,
                pose=pose,
                timestamp=t,
                depth_target=out.depth if with_depth else None,
                normal_target=out.normal if with_normal else None,
            )
        )
    return frames
