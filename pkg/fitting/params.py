"""
Unconstrained parameterisation of a GaussianScene for gradient-based fitting.

Each field maps to an unconstrained tensor: scale through log, opacity and
colour through logit, lifespan through the inverse softplus. Orientation is
kept as a raw 4-vector and normalised on read. Position, temporal centre and
both velocities are used as they are.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from model.gaussian import DTYPE, FIELD_SHAPES, GaussianScene, SceneTensors
from model.rotation import quat_normalize
from utils.errors import DomainError

logger = logging.getLogger(__name__)

# Logit inputs are kept this far inside (0, 1).
PROB_EPS = 1e-6

GROUPS: Tuple[str, ...] = tuple(FIELD_SHAPES)


@dataclass
class ParamVector:
    """One unconstrained tensor per scene field, in FIELD_SHAPES order."""
    position: torch.Tensor
    scale: torch.Tensor
    orientation: torch.Tensor
    opacity: torch.Tensor
    color: torch.Tensor
    t_center: torch.Tensor
    lifespan: torch.Tensor
    velocity: torch.Tensor
    ang_velocity: torch.Tensor
    time_base: float = 0.0

    @property
    def count(self) -> int:
        return self.opacity.shape[0]

    @property
    def size(self) -> int:
        """Total number of scalar parameters."""
        return sum(t.numel() for t in self.tensors())

    def tensors(self) -> List[torch.Tensor]:
        return [getattr(self, name) for name in GROUPS]

    def items(self) -> Iterator[Tuple[str, torch.Tensor]]:
        return ((name, getattr(self, name)) for name in GROUPS)

    def detach(self) -> "ParamVector":
        return ParamVector(
            **{name: t.detach().clone() for name, t in self.items()},
            time_base=self.time_base,
        )

    def requires_grad_(self, flag: bool = True) -> "ParamVector":
        for t in self.tensors():
            t.requires_grad_(flag)
        return self

    def flatten(self) -> np.ndarray:
        """All parameters as one float64 vector, group by group."""
        if self.size == 0:
            return np.zeros(0)
        return torch.cat([t.detach().reshape(-1) for t in self.tensors()]).cpu().numpy().astype(np.float64)

    def group_slices(self) -> Dict[str, slice]:
        """Position of each group inside flatten()."""
        slices, start = {}, 0
        for name, t in self.items():
            slices[name] = slice(start, start + t.numel())
            start += t.numel()
        return slices

    def group_of(self, index: int) -> str:
        for name, span in self.group_slices().items():
            if span.start <= index < span.stop:
                return name
        raise DomainError(f"parameter index {index} is out of range for {self.size} parameters")

    def with_flat(self, flat: np.ndarray) -> "ParamVector":
        """A copy holding the values of a flatten()-ordered vector."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.size,):
            raise DomainError(f"expected {self.size} values, got shape {flat.shape}")
        values = {}
        for name, span in self.group_slices().items():
            shape = getattr(self, name).shape
            values[name] = torch.as_tensor(flat[span].copy(), dtype=DTYPE).reshape(shape)
        return ParamVector(**values, time_base=self.time_base)

    @classmethod
    def zeros_like(cls, other: "ParamVector") -> "ParamVector":
        return cls(**{name: torch.zeros_like(t) for name, t in other.items()}, time_base=other.time_base)


def _clamped_logit(values: np.ndarray, name: str) -> torch.Tensor:
    clipped = np.clip(values, PROB_EPS, 1.0 - PROB_EPS)
    moved = int(np.count_nonzero(clipped != values))
    if moved:
        logger.warning(f"{moved} {name} values clamped into ({PROB_EPS}, {1.0 - PROB_EPS})")
    x = torch.as_tensor(clipped, dtype=DTYPE)
    return torch.log(x) - torch.log1p(-x)


def _inverse_softplus(values: np.ndarray) -> torch.Tensor:
    x = torch.as_tensor(values, dtype=DTYPE)
    return x + torch.log(-torch.expm1(-x))


def encode_params(scene: GaussianScene) -> ParamVector:
    """
    Map a scene to unconstrained parameters.

    Opacity and colour values at exactly 0 or 1 are clamped into
    (1e-6, 1 - 1e-6) with a warning so the logit stays finite.
    """
    return ParamVector(
        position=torch.as_tensor(scene.position, dtype=DTYPE).clone(),
        scale=torch.log(torch.as_tensor(scene.scale, dtype=DTYPE)),
        orientation=torch.as_tensor(scene.orientation, dtype=DTYPE).clone(),
        opacity=_clamped_logit(scene.opacity, "opacity"),
        color=_clamped_logit(scene.color, "color"),
        t_center=torch.as_tensor(scene.t_center, dtype=DTYPE).clone(),
        lifespan=_inverse_softplus(scene.lifespan),
        velocity=torch.as_tensor(scene.velocity, dtype=DTYPE).clone(),
        ang_velocity=torch.as_tensor(scene.ang_velocity, dtype=DTYPE).clone(),
        time_base=scene.time_base,
    )


def decode_tensors(pv: ParamVector) -> SceneTensors:
    """Differentiable decode: constrained scene tensors sharing the autograd graph of pv."""
    return SceneTensors(
        position=pv.position,
        scale=torch.exp(pv.scale),
        orientation=quat_normalize(pv.orientation),
        opacity=torch.sigmoid(pv.opacity),
        color=torch.sigmoid(pv.color),
        t_center=pv.t_center,
        lifespan=F.softplus(pv.lifespan),
        velocity=pv.velocity,
        ang_velocity=pv.ang_velocity,
        time_base=pv.time_base,
    )


def decode_params(pv: ParamVector) -> GaussianScene:
    """Inverse of encode_params."""
    with torch.no_grad():
        return decode_tensors(pv).to_scene()
