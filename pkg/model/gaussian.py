"""
Dynamic Gaussian surfels and their closed-form time evaluation.

A Gaussian4D is a flat 2D Gaussian disk (surfel) with a temporal centre,
lifespan, linear velocity and constant angular velocity. Opacity fades as a
Gaussian in time so that it drops to o_th times its peak at c ± l/2;
position moves linearly and orientation spins about the surfel's own centre.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np
import torch

from model.rotation import axis_angle_to_quat, quat_multiply, quat_normalize, quat_to_rotmat
from utils.errors import DomainError

logger = logging.getLogger(__name__)

DTYPE = torch.float64

# Lifespans are clamped here so the temporal sigma stays positive.
MIN_LIFESPAN = 1e-4
MIN_SCALE = 1e-8
# Stored quaternions this close to unit length are kept as they are.
UNIT_TOL = 1e-6
DEFAULT_O_TH = 0.05

# Field name -> trailing shape, in scene-file order.
FIELD_SHAPES = {
    "position": (3,),
    "scale": (2,),
    "orientation": (4,),
    "opacity": (),
    "color": (3,),
    "t_center": (),
    "lifespan": (),
    "velocity": (3,),
    "ang_velocity": (3,),
}


# ============================================================================
# TEMPORAL MATH (batched, differentiable)
# ============================================================================

def temporal_sigma(lifespan: float, o_th: float = DEFAULT_O_TH) -> float:
    """
    Temporal standard deviation for a lifespan.

    Args:
        lifespan: Lifespan in seconds, > 0
        o_th: Opacity multiplier at the lifespan boundary, in (0, 1)

    Returns:
        sigma such that exp(-(l/2)^2 / (2 sigma^2)) == o_th

    Raises:
        DomainError: If lifespan <= 0 or o_th is outside (0, 1)
    """
    if not lifespan > 0:
        raise DomainError(f"lifespan must be positive, got {lifespan}")
    if not 0.0 < o_th < 1.0:
        raise DomainError(f"o_th must lie in (0, 1), got {o_th}")
    return math.sqrt(-((lifespan / 2.0) ** 2) / (2.0 * math.log(o_th)))


def temporal_opacity(
    opacity: torch.Tensor,
    t_center: torch.Tensor,
    lifespan: torch.Tensor,
    t: float,
    o_th: float = DEFAULT_O_TH,
) -> torch.Tensor:
    """Batched o * exp(-(t - c)^2 / (2 sigma^2))."""
    sigma_sq = -((lifespan / 2.0) ** 2) / (2.0 * math.log(o_th))
    dt = t - t_center
    return opacity * torch.exp(-0.5 * dt * dt / sigma_sq)


def temporal_position(
    position: torch.Tensor,
    velocity: torch.Tensor,
    t_center: torch.Tensor,
    t: float,
) -> torch.Tensor:
    """Batched x + v (t - c)."""
    return position + velocity * (t - t_center).unsqueeze(-1)


def temporal_orientation(
    orientation: torch.Tensor,
    ang_velocity: torch.Tensor,
    t_center: torch.Tensor,
    t: float,
) -> torch.Tensor:
    """Batched q ⊗ phi(omega (t - c)), renormalised."""
    spin = axis_angle_to_quat(ang_velocity * (t - t_center).unsqueeze(-1))
    return quat_normalize(quat_multiply(orientation, spin))


# ============================================================================
# DATA CLASSES
# ============================================================================

def _vec(value, length: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64).reshape(-1)
    if arr.shape != (length,):
        raise DomainError(f"{name} must have {length} components, got shape {arr.shape}")
    return arr


@dataclass
class Gaussian4D:
    """One dynamic surfel."""
    position: np.ndarray
    scale: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    opacity: float = 1.0
    color: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5, 0.5]))
    t_center: float = 0.0
    lifespan: float = 1.0e6
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ang_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.position = _vec(self.position, 3, "position")
        self.scale = np.maximum(_vec(self.scale, 2, "scale"), MIN_SCALE)
        q = _vec(self.orientation, 4, "orientation")
        norm = np.linalg.norm(q)
        if norm == 0:
            raise DomainError("orientation quaternion must be non-zero")
        self.orientation = q / norm
        self.opacity = float(np.clip(self.opacity, 0.0, 1.0))
        self.color = _vec(self.color, 3, "color")
        self.t_center = float(self.t_center)
        if self.lifespan < MIN_LIFESPAN:
            logger.warning(f"lifespan {self.lifespan} clamped to {MIN_LIFESPAN}")
        self.lifespan = float(max(self.lifespan, MIN_LIFESPAN))
        self.velocity = _vec(self.velocity, 3, "velocity")
        self.ang_velocity = _vec(self.ang_velocity, 3, "ang_velocity")


@dataclass(frozen=True)
class SurfelSnapshot:
    """A Gaussian evaluated at one timestamp."""
    position_t: np.ndarray
    orientation_t: np.ndarray
    opacity_t: float
    scale: np.ndarray
    color: np.ndarray
    normal_t: np.ndarray


@dataclass(frozen=True)
class SurfelSnapshots:
    """Structure-of-arrays snapshots of a whole scene at one timestamp."""
    position: torch.Tensor      # (n, 3)
    orientation: torch.Tensor   # (n, 4)
    rotation: torch.Tensor      # (n, 3, 3), columns are tangent u, tangent v, normal
    opacity: torch.Tensor       # (n,)
    scale: torch.Tensor         # (n, 2)
    color: torch.Tensor         # (n, 3)

    def __len__(self) -> int:
        return self.position.shape[0]

    @property
    def normal(self) -> torch.Tensor:
        return self.rotation[..., :, 2]

    def __getitem__(self, i: int) -> SurfelSnapshot:
        def host(x):
            return x[i].detach().cpu().numpy()

        return SurfelSnapshot(
            position_t=host(self.position),
            orientation_t=host(self.orientation),
            opacity_t=float(self.opacity[i]),
            scale=host(self.scale),
            color=host(self.color),
            normal_t=host(self.normal),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))


@dataclass(frozen=True)
class GaussianScene:
    """
    Structure-of-arrays collection of Gaussian4D.

    t_center is measured on the scene's local clock; global time t maps to
    local time t - time_base.
    """
    position: np.ndarray
    scale: np.ndarray
    orientation: np.ndarray
    opacity: np.ndarray
    color: np.ndarray
    t_center: np.ndarray
    lifespan: np.ndarray
    velocity: np.ndarray
    ang_velocity: np.ndarray
    time_base: float = 0.0

    def __post_init__(self):
        count = np.asarray(self.opacity).reshape(-1).shape[0]
        for name, trailing in FIELD_SHAPES.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            try:
                arr = arr.reshape((count,) + trailing)
            except ValueError:
                raise DomainError(
                    f"{name} has shape {arr.shape}, expected {(count,) + trailing}"
                ) from None
            object.__setattr__(self, name, arr)

        norms = np.linalg.norm(self.orientation, axis=-1, keepdims=True)
        if np.any(norms == 0):
            raise DomainError("orientation quaternions must be non-zero")
        norms = np.where(np.abs(norms - 1.0) > UNIT_TOL, norms, 1.0)
        object.__setattr__(self, "orientation", self.orientation / norms)
        object.__setattr__(self, "opacity", np.clip(self.opacity, 0.0, 1.0))
        object.__setattr__(self, "scale", np.maximum(self.scale, MIN_SCALE))

        short = self.lifespan < MIN_LIFESPAN
        if np.any(short):
            logger.warning(f"{int(short.sum())} lifespans clamped to {MIN_LIFESPAN}")
        object.__setattr__(self, "lifespan", np.maximum(self.lifespan, MIN_LIFESPAN))
        object.__setattr__(self, "time_base", float(self.time_base))

    # ===========================
    # Construction
    # ===========================

    @classmethod
    def empty(cls, time_base: float = 0.0) -> "GaussianScene":
        arrays = {name: np.zeros((0,) + shape) for name, shape in FIELD_SHAPES.items()}
        return cls(**arrays, time_base=time_base)

    @classmethod
    def from_gaussians(cls, gaussians: Iterable[Gaussian4D], time_base: float = 0.0) -> "GaussianScene":
        gaussians = list(gaussians)
        if not gaussians:
            return cls.empty(time_base)
        arrays = {
            name: np.stack([np.asarray(getattr(g, name), dtype=np.float64) for g in gaussians])
            for name in FIELD_SHAPES
        }
        return cls(**arrays, time_base=time_base)

    @classmethod
    def concatenate(cls, scenes: Sequence["GaussianScene"], time_base: float = 0.0) -> "GaussianScene":
        """Concatenate scenes that already share a clock."""
        if not scenes:
            return cls.empty(time_base)
        arrays = {
            name: np.concatenate([getattr(s, name) for s in scenes], axis=0)
            for name in FIELD_SHAPES
        }
        return cls(**arrays, time_base=time_base)

    # ===========================
    # Access
    # ===========================

    @property
    def count(self) -> int:
        return self.opacity.shape[0]

    def __len__(self) -> int:
        return self.count

    def gaussian(self, i: int) -> Gaussian4D:
        return Gaussian4D(**{name: getattr(self, name)[i] for name in FIELD_SHAPES})

    def subset(self, indices: Union[Sequence[int], np.ndarray]) -> "GaussianScene":
        idx = np.asarray(indices, dtype=np.int64)
        return GaussianScene(
            **{name: getattr(self, name)[idx] for name in FIELD_SHAPES},
            time_base=self.time_base,
        )

    def replace(self, **changes) -> "GaussianScene":
        values = {name: getattr(self, name) for name in FIELD_SHAPES}
        values["time_base"] = self.time_base
        values.update(changes)
        return GaussianScene(**values)

    def dynamic_fraction(self, velocity_threshold: float, lifespan_threshold: float) -> float:
        """Fraction of Gaussians that count as dynamic under the given thresholds."""
        if self.count == 0:
            return 0.0
        speed = np.linalg.norm(self.velocity, axis=-1)
        dynamic = (speed > velocity_threshold) | (self.lifespan < lifespan_threshold)
        return float(dynamic.mean())

    def to_tensors(self) -> "SceneTensors":
        return SceneTensors(
            **{name: torch.as_tensor(getattr(self, name), dtype=DTYPE) for name in FIELD_SHAPES},
            time_base=self.time_base,
        )


@dataclass
class SceneTensors:
    """Torch mirror of GaussianScene; fields may carry autograd history."""
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

    def to_scene(self) -> GaussianScene:
        return GaussianScene(
            **{name: getattr(self, name).detach().cpu().numpy() for name in FIELD_SHAPES},
            time_base=self.time_base,
        )


SceneLike = Union[GaussianScene, SceneTensors]


def as_tensors(scene: SceneLike) -> SceneTensors:
    return scene if isinstance(scene, SceneTensors) else scene.to_tensors()


# ============================================================================
# PUBLIC OPERATIONS
# ============================================================================

def _scalar_tensor(x) -> torch.Tensor:
    return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=DTYPE)


def opacity_at(g: Gaussian4D, t: float, o_th: float = DEFAULT_O_TH) -> float:
    """Opacity of a Gaussian at time t."""
    temporal_sigma(g.lifespan, o_th)
    value = temporal_opacity(
        _scalar_tensor(g.opacity), _scalar_tensor(g.t_center), _scalar_tensor(g.lifespan), t, o_th
    )
    return float(value)


def position_at(g: Gaussian4D, t: float) -> np.ndarray:
    """Centre of a Gaussian at time t."""
    value = temporal_position(
        _scalar_tensor(g.position), _scalar_tensor(g.velocity), _scalar_tensor(g.t_center), t
    )
    return value.numpy()


def orientation_at(g: Gaussian4D, t: float) -> np.ndarray:
    """Orientation quaternion (w, x, y, z) of a Gaussian at time t."""
    value = temporal_orientation(
        _scalar_tensor(g.orientation), _scalar_tensor(g.ang_velocity), _scalar_tensor(g.t_center), t
    )
    return value.numpy()


def evaluate_at_time(scene: SceneLike, t: float, o_th: float = DEFAULT_O_TH) -> SurfelSnapshots:
    """
    Evaluate every Gaussian of a scene at global time t.

    Args:
        scene: GaussianScene or SceneTensors
        t: Global timestamp in seconds
        o_th: Opacity multiplier at the lifespan boundary

    Returns:
        SurfelSnapshots with one entry per Gaussian, differentiable when the
        scene tensors require grad
    """
    if not 0.0 < o_th < 1.0:
        raise DomainError(f"o_th must lie in (0, 1), got {o_th}")
    st = as_tensors(scene)
    local_t = float(t) - st.time_base

    orientation = temporal_orientation(st.orientation, st.ang_velocity, st.t_center, local_t)
    return SurfelSnapshots(
        position=temporal_position(st.position, st.velocity, st.t_center, local_t),
        orientation=orientation,
        rotation=quat_to_rotmat(orientation),
        opacity=temporal_opacity(st.opacity, st.t_center, st.lifespan, local_t, o_th),
        scale=st.scale,
        color=st.color,
    )


def random_scene(
    count: int,
    rng: np.random.Generator,
    depth_range: tuple = (2.0, 6.0),
    extent: float = 1.0,
    scale_range: tuple = (0.05, 0.3),
    opacity_range: tuple = (0.2, 0.9),
    dynamic: bool = True,
    time_base: float = 0.0,
    max_tilt: float = 0.5,
) -> GaussianScene:
    """
    Random scene in front of a camera at the origin looking down +z.

    Used by benchmarks and tests; depths are spread evenly over depth_range
    so that centre-depth order and per-ray order agree for modest tilts.
    """
    if count == 0:
        return GaussianScene.empty(time_base)
    z = np.linspace(depth_range[0], depth_range[1], count)
    rng.shuffle(z)
    xy = rng.uniform(-extent, extent, size=(count, 2)) * (z[:, None] / depth_range[1])
    position = np.column_stack([xy, z])

    # mild tilt around the camera-facing orientation
    axis = rng.normal(size=(count, 3))
    axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = rng.uniform(0.0, max_tilt, size=(count, 1))
    orientation = np.concatenate([np.cos(angle / 2), np.sin(angle / 2) * axis], axis=-1)

    motion = 1.0 if dynamic else 0.0
    return GaussianScene(
        position=position,
        scale=rng.uniform(*scale_range, size=(count, 2)),
        orientation=orientation,
        opacity=rng.uniform(*opacity_range, size=count),
        color=rng.uniform(0.0, 1.0, size=(count, 3)),
        t_center=rng.uniform(-0.5, 0.5, size=count) * motion,
        lifespan=rng.uniform(2.0, 10.0, size=count) if dynamic else np.full(count, 1.0e6),
        velocity=rng.normal(scale=0.1, size=(count, 3)) * motion,
        ang_velocity=rng.normal(scale=0.2, size=(count, 3)) * motion,
        time_base=time_base,
    )
