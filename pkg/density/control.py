"""
Patch-opacity density control.

Pixel-aligned Gaussians come in p×p patches. Within each patch a Gaussian is
"activated" when its opacity exceeds the patch mean by more than one standard
deviation. Activation masks are summed over every patch into one global
histogram, and the S most frequently activated intra-patch channels are the
ones kept when pruning. Densification trades those savings for a higher
spatial (R_s²) and temporal (R_t) sampling rate.
"""
import json
import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
from einops import rearrange

from model.encoding import patchify
from model.gaussian import GaussianScene
from utils.errors import DomainError

logger = logging.getLogger(__name__)


# ============================================================================
# TYPES
# ============================================================================

@dataclass(frozen=True)
class PatchOpacityGrid:
    """Per-pixel opacities of every patch, shape (n_patches, p²)."""
    values: np.ndarray
    patch_size: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        channels = self.patch_size * self.patch_size
        if self.patch_size < 1:
            raise DomainError(f"patch size must be >= 1, got {self.patch_size}")
        if values.ndim != 2 or values.shape[1] != channels:
            raise DomainError(f"grid values must have shape (n, {channels}), got {values.shape}")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise DomainError("opacities must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    @property
    def n_patches(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.patch_size * self.patch_size


@dataclass(frozen=True)
class ActivationHistogram:
    """Per-channel activation counts over all patches."""
    counts: np.ndarray
    total_patches: int

    def to_dict(self) -> Dict:
        return {"counts": self.counts.tolist(), "total_patches": self.total_patches}


@dataclass(frozen=True)
class DensifyPlan:
    """Gaussian budget of pruning S of p² channels and densifying by R_s, R_t."""
    R_s: int
    R_t: int
    S: int
    p: int
    gaussian_ratio: Fraction
    sampling_gain: int

    def to_dict(self) -> Dict:
        return {
            "R_s": self.R_s,
            "R_t": self.R_t,
            "S": self.S,
            "p": self.p,
            "gaussian_ratio": float(self.gaussian_ratio),
            "gaussian_ratio_exact": str(self.gaussian_ratio),
            "sampling_gain": self.sampling_gain,
        }


@dataclass(frozen=True)
class PruningReport:
    """Share of activated opacity mass kept by each channel-selection strategy."""
    histogram_kept_activation: float
    random_kept_activation: float
    uniform_kept_activation: float
    per_patch_kept_activation: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "histogram_kept_activation": self.histogram_kept_activation,
            "random_kept_activation": self.random_kept_activation,
            "uniform_kept_activation": self.uniform_kept_activation,
            "per_patch_kept_activation": self.per_patch_kept_activation,
        }


# ============================================================================
# STATISTICS AND MASKS
# ============================================================================

def _moments(values: np.ndarray):
    mean = values.mean(axis=-1, keepdims=True)
    # two-pass variance, never negative
    centered = values - mean
    return mean, np.sqrt((centered * centered).mean(axis=-1, keepdims=True))


def patch_stats(patch) -> tuple:
    """
    Mean and standard deviation of one patch's opacities.

    Raises:
        DomainError: If the patch is empty
    """
    values = np.asarray(patch, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise DomainError("cannot compute statistics of an empty patch")
    mean, std = _moments(values)
    return float(mean[0]), float(std[0])


def activation_mask(patch) -> np.ndarray:
    """Channels whose opacity is strictly above mean + one standard deviation."""
    values = np.asarray(patch, dtype=np.float64)
    if values.shape[-1] == 0:
        raise DomainError("cannot compute statistics of an empty patch")
    mean, std = _moments(values)
    return values > mean + std


def patchify_opacity(opacity_maps, p: int) -> PatchOpacityGrid:
    """
    Build a grid from pixel-aligned opacity maps.

    Args:
        opacity_maps: (N, H, W) or (H, W) opacities
        p: Patch size

    Returns:
        PatchOpacityGrid with N·(H/p)·(W/p) patches
    """
    maps = np.asarray(opacity_maps, dtype=np.float64)
    if maps.ndim == 2:
        maps = maps[None]
    patches = [rearrange(patchify(m, p), "n ph pw -> n (ph pw)") for m in maps]
    return PatchOpacityGrid(values=np.concatenate(patches, axis=0), patch_size=p)


def aggregate_histogram(grids: Sequence[PatchOpacityGrid]) -> ActivationHistogram:
    """
    Sum activation masks over every patch of every grid.

    Raises:
        DomainError: If no grids are given or patch sizes differ
    """
    if not grids:
        raise DomainError("at least one opacity grid is required")
    p = grids[0].patch_size
    if any(g.patch_size != p for g in grids):
        sizes = sorted({g.patch_size for g in grids})
        raise DomainError(f"all grids must share one patch size, got {sizes}")

    counts = np.zeros(p * p, dtype=np.int64)
    total = 0
    for grid in grids:
        if grid.n_patches:
            counts += activation_mask(grid.values).sum(axis=0)
        total += grid.n_patches
    logger.debug(f"aggregated {total} patches, {int(counts.sum())} activations")
    return ActivationHistogram(counts=counts, total_patches=total)


# ============================================================================
# SELECTION AND PRUNING
# ============================================================================

def select_channels(h: ActivationHistogram, S: int) -> List[int]:
    """
    The S most activated channels, lower index first on ties, sorted ascending.

    Raises:
        DomainError: If S is outside [1, p²]
    """
    channels = len(h.counts)
    if not 1 <= S <= channels:
        raise DomainError(f"S must lie in [1, {channels}], got {S}")
    # lexsort keys run last-to-first: count descending, then index ascending
    order = np.lexsort((np.arange(channels), -np.asarray(h.counts)))
    return sorted(int(i) for i in order[:S])


def top_opacity_channels(grid: PatchOpacityGrid, S: int) -> np.ndarray:
    """Per-patch top-S channels by opacity, shape (n_patches, S)."""
    if not 1 <= S <= grid.channels:
        raise DomainError(f"S must lie in [1, {grid.channels}], got {S}")
    return np.argsort(-grid.values, axis=1, kind="stable")[:, :S]


def uniform_channels(channels: int, S: int) -> List[int]:
    """S channels spread evenly over [0, channels)."""
    picks = np.linspace(0, channels - 1, S).round().astype(np.int64)
    return sorted(set(int(i) for i in picks))


def apply_pruning(scene: GaussianScene, channels: Sequence[int], patch_size: int) -> GaussianScene:
    """
    Keep the selected intra-patch channels of a patch-major scene.

    Gaussian i of the scene belongs to patch i // p² at channel i % p².

    Raises:
        DomainError: If channels are invalid or the scene is not a whole number of patches
    """
    per_patch = patch_size * patch_size
    chosen = np.asarray([int(c) for c in channels], dtype=np.int64)
    values, counts = np.unique(chosen, return_counts=True)
    if np.any(counts > 1):
        raise DomainError(f"channels must be distinct, repeated: {values[counts > 1].tolist()}")
    chosen = values
    if chosen.size == 0 or chosen.min() < 0 or chosen.max() >= per_patch:
        raise DomainError(f"channels must be indices in [0, {per_patch})")
    if scene.count % per_patch:
        raise DomainError(f"scene of {scene.count} Gaussians is not a whole number of {per_patch}-Gaussian patches")

    n_patches = scene.count // per_patch
    keep = (np.arange(n_patches)[:, None] * per_patch + chosen[None, :]).reshape(-1)
    pruned = scene.subset(keep)
    logger.info(f"pruned {scene.count} -> {pruned.count} Gaussians ({len(chosen)}/{per_patch} channels)")
    return pruned


def densify_plan(R_s: int, R_t: int, S: int, p: int) -> DensifyPlan:
    """
    Gaussian count ratio and space-time sampling gain of prune-then-densify.

    Raises:
        DomainError: If any argument is not positive
    """
    if min(R_s, R_t, S, p) < 1:
        raise DomainError(f"R_s, R_t, S and p must be positive, got {(R_s, R_t, S, p)}")
    gain = R_s * R_s * R_t
    return DensifyPlan(
        R_s=R_s, R_t=R_t, S=S, p=p,
        gaussian_ratio=Fraction(gain * S, p * p),
        sampling_gain=gain,
    )


# ============================================================================
# STRATEGY COMPARISON
# ============================================================================

def _kept_share(values: np.ndarray, masks: np.ndarray, kept: np.ndarray) -> float:
    """Share of activated opacity mass at kept channels; kept is a bool (n, p²) array."""
    activated = values * masks
    total = activated.sum()
    if total == 0:
        return 1.0
    return float((activated * kept).sum() / total)


def compare_pruning_strategies(
    grids: Sequence[PatchOpacityGrid], S: int, seed: int = 0
) -> PruningReport:
    """
    Activated-opacity retention of histogram, random, uniform and per-patch selection.

    Random keeps one fixed random set of S channels for every patch, uniform
    keeps S evenly spaced channels, per-patch keeps each patch's own top-S.
    """
    histogram = aggregate_histogram(grids)
    channels = len(histogram.counts)
    values = np.concatenate([g.values for g in grids], axis=0)
    masks = activation_mask(values) if values.size else np.zeros_like(values, dtype=bool)

    def global_keep(selected) -> np.ndarray:
        kept = np.zeros(channels, dtype=bool)
        kept[list(selected)] = True
        return np.broadcast_to(kept, values.shape)

    rng = np.random.default_rng(seed)
    random_set = rng.choice(channels, size=S, replace=False)

    per_patch = np.zeros(values.shape, dtype=bool)
    if values.size:
        top = np.concatenate([top_opacity_channels(g, S) for g in grids if g.n_patches], axis=0)
        np.put_along_axis(per_patch, top, True, axis=1)

    report = PruningReport(
        histogram_kept_activation=_kept_share(values, masks, global_keep(select_channels(histogram, S))),
        random_kept_activation=_kept_share(values, masks, global_keep(random_set)),
        uniform_kept_activation=_kept_share(values, masks, global_keep(uniform_channels(channels, S))),
        per_patch_kept_activation=_kept_share(values, masks, per_patch),
    )
    logger.debug(f"pruning comparison S={S}: {report.to_dict()}")
    return report


# ============================================================================
# PERSISTENCE
# ============================================================================

def save_channels(path: Union[str, Path], channels: Sequence[int]) -> None:
    """Write a channel selection as a JSON array of integers."""
    Path(path).write_text(json.dumps([int(c) for c in channels]) + "\n", encoding="utf-8")
    logger.info(f"wrote {len(channels)} channels to {path}")


def load_channels(path: Union[str, Path]) -> List[int]:
    """
    Read a channel selection written by save_channels.

    Raises:
        DomainError: If the file is not a JSON array of integers
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DomainError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(data, list) or not all(isinstance(c, int) and not isinstance(c, bool) for c in data):
        raise DomainError(f"{path} must hold a JSON array of integers")
    return data
