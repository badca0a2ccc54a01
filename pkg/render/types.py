"""
Render configuration and output planes.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import torch
from pydantic import BaseModel, Field

from config.settings import Settings, get_settings


class RenderConfig(BaseModel):
    """Rasterizer options. Defaults come from the process settings."""

    model_config = {"frozen": True}

    tile_size: int = Field(default=16, ge=1)
    sigma_cutoff: float = Field(default=3.0, gt=0.0)
    transmittance_floor: float = Field(default=1e-4, gt=0.0)
    alpha_clamp: float = Field(default=0.999, gt=0.0, le=1.0)
    dyn_velocity_threshold: float = Field(default=0.05, gt=0.0)
    dyn_lifespan_threshold: float = Field(default=64.0 / 30.0, gt=0.0)
    background: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    o_th: float = Field(default=0.05, gt=0.0, lt=1.0)
    workers: int = Field(default=1, ge=1)

    @classmethod
    def from_settings(cls, settings: Optional[Settings] = None, **overrides) -> "RenderConfig":
        s = settings or get_settings()
        values = dict(
            tile_size=s.tile_size,
            sigma_cutoff=s.sigma_cutoff,
            transmittance_floor=s.transmittance_floor,
            alpha_clamp=s.alpha_clamp,
            dyn_velocity_threshold=s.dyn_velocity_threshold,
            dyn_lifespan_threshold=s.dyn_lifespan_threshold,
            background=s.background,
            o_th=s.o_th,
            workers=s.render_workers,
        )
        values.update(overrides)
        return cls(**values)


@dataclass
class RenderPlanes:
    """Torch planes from one render; may carry autograd history."""
    color: torch.Tensor          # (H, W, 3)
    alpha: torch.Tensor          # (H, W)
    depth: torch.Tensor          # (H, W)
    normal: torch.Tensor         # (H, W, 3)
    flow: torch.Tensor           # (H, W, 2)
    dynamic_mask: torch.Tensor   # (H, W)

    def to_output(self) -> "RenderOutput":
        def host(x):
            return x.detach().cpu().numpy()

        return RenderOutput(
            color=host(self.color),
            alpha=host(self.alpha),
            depth=host(self.depth),
            normal=host(self.normal),
            flow=host(self.flow),
            dynamic_mask=host(self.dynamic_mask),
        )


@dataclass
class RenderOutput:
    """Host-side render result."""
    color: np.ndarray
    alpha: np.ndarray
    depth: np.ndarray
    normal: np.ndarray
    flow: np.ndarray
    dynamic_mask: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.alpha.shape

    @classmethod
    def blank(cls, height: int, width: int, background=(0.0, 0.0, 0.0)) -> "RenderOutput":
        return cls(
            color=np.broadcast_to(np.asarray(background, dtype=np.float64), (height, width, 3)).copy(),
            alpha=np.zeros((height, width)),
            depth=np.zeros((height, width)),
            normal=np.zeros((height, width, 3)),
            flow=np.zeros((height, width, 2)),
            dynamic_mask=np.zeros((height, width)),
        )
