"""
Tile-based surfel rasterizer.

Each Gaussian is evaluated at the query time, culled, binned into screen
tiles by a conservative bounding box of its sigma_cutoff footprint, sorted by
camera-space centre depth and composited front to back per pixel. The whole
pipeline is written in torch so the same code serves plain rendering and
autograd-driven fitting; the sort order and tile binning are treated as
constants during differentiation.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch

from model.camera import CameraIntrinsics, CameraPose, pixel_rays, project_points, world_to_camera
from model.gaussian import DTYPE, SceneLike, SurfelSnapshot, as_tensors, evaluate_at_time, temporal_position
from model.rotation import quat_to_rotmat
from render.types import RenderConfig, RenderOutput, RenderPlanes
from utils.errors import DomainError

logger = logging.getLogger(__name__)

# |d . n| below this counts as a ray parallel to the surfel plane
PARALLEL_EPS = 1e-9
WEIGHT_EPS = 1e-10
NORMAL_EPS = 1e-24


# ============================================================================
# SINGLE-SURFEL PRIMITIVES
# ============================================================================

def intersect_surfel(
    snapshot: SurfelSnapshot, ray_origin, ray_dir
) -> Optional[Tuple[float, float, float]]:
    """
    Intersect one ray with a surfel's plane.

    Args:
        snapshot: Surfel evaluated at the render time
        ray_origin: Ray origin (3,)
        ray_dir: Unit ray direction (3,)

    Returns:
        (u, v, depth) in surfel tangent units and ray distance, or None on a miss
    """
    rot = quat_to_rotmat(torch.as_tensor(snapshot.orientation_t, dtype=DTYPE)).numpy()
    origin = np.asarray(ray_origin, dtype=np.float64)
    direction = np.asarray(ray_dir, dtype=np.float64)
    normal = rot[:, 2]

    denom = float(direction @ normal)
    if abs(denom) < PARALLEL_EPS:
        return None
    depth = float((snapshot.position_t - origin) @ normal) / denom
    if depth <= 0:
        return None

    offset = origin + depth * direction - snapshot.position_t
    u = float(offset @ rot[:, 0]) / snapshot.scale[0]
    v = float(offset @ rot[:, 1]) / snapshot.scale[1]
    return u, v, depth


def splat_alpha(u: float, v: float, opacity_t: float, cfg: RenderConfig) -> float:
    """Gaussian kernel alpha at tangent coordinates (u, v), zero past the cutoff."""
    q = u * u + v * v
    if q > cfg.sigma_cutoff ** 2:
        return 0.0
    return min(cfg.alpha_clamp, opacity_t * math.exp(-0.5 * q))


# ============================================================================
# TILED RENDERER
# ============================================================================

@dataclass
class _SortedSurfels:
    """Culled, depth-sorted per-Gaussian attributes for one render."""
    position: torch.Tensor
    tangent_u: torch.Tensor
    tangent_v: torch.Tensor
    normal: torch.Tensor
    scale: torch.Tensor
    opacity: torch.Tensor
    color: torch.Tensor
    flow: torch.Tensor
    dynamic: torch.Tensor
    boxes: torch.Tensor       # (G, 4) float pixel bounds x_lo, y_lo, x_hi, y_hi

    def __len__(self) -> int:
        return self.opacity.shape[0]


def _screen_boxes(
    position: torch.Tensor,
    rotation: torch.Tensor,
    scale: torch.Tensor,
    intr: CameraIntrinsics,
    pose: CameraPose,
    cutoff: float,
) -> torch.Tensor:
    """Conservative pixel bounds of each surfel's cutoff square."""
    with torch.no_grad():
        a = rotation[..., 0] * (cutoff * scale[:, 0:1])
        b = rotation[..., 1] * (cutoff * scale[:, 1:2])
        corners = torch.stack((position + a + b, position + a - b, position - a + b, position - a - b), dim=1)
        uv, z = project_points(corners, intr, pose)
        lo = torch.floor(uv.min(dim=1).values) - 1.0
        hi = torch.ceil(uv.max(dim=1).values) + 1.0
        # a corner behind the camera makes the projection unbounded
        behind = (z <= 0).any(dim=1, keepdim=True)
        lo = torch.where(behind, torch.full_like(lo, -math.inf), lo)
        hi = torch.where(behind, torch.full_like(hi, math.inf), hi)
        return torch.cat((lo, hi), dim=1)


def _prepare(
    scene: SceneLike,
    intr: CameraIntrinsics,
    pose: CameraPose,
    t: float,
    cfg: RenderConfig,
    flow_t1: Optional[float],
    timings: Dict[str, float],
) -> Tuple[_SortedSurfels, int]:
    started = time.perf_counter()
    st = as_tensors(scene)
    snaps = evaluate_at_time(st, t, cfg.o_th)
    timings["evaluate"] = timings.get("evaluate", 0.0) + (time.perf_counter() - started)
    started = time.perf_counter()

    z = world_to_camera(snaps.position, pose)[:, 2].detach()
    visible = (z > 0) & (snaps.opacity.detach() > 0)
    idx = torch.nonzero(visible).squeeze(-1)
    idx = idx[torch.argsort(z[idx], stable=True)]

    position = snaps.position[idx]
    rotation = snaps.rotation[idx]
    scale = snaps.scale[idx]

    if flow_t1 is None or len(idx) == 0:
        flow = torch.zeros((len(idx), 2), dtype=DTYPE)
    else:
        later = temporal_position(st.position, st.velocity, st.t_center, float(flow_t1) - st.time_base)[idx]
        uv0, _ = project_points(position, intr, pose)
        uv1, z1 = project_points(later, intr, pose)
        flow = torch.where((z1 > 0).unsqueeze(-1), uv1 - uv0, torch.zeros_like(uv0))

    speed = torch.linalg.vector_norm(st.velocity[idx].detach(), dim=-1)
    dynamic = (speed > cfg.dyn_velocity_threshold) | (st.lifespan[idx].detach() < cfg.dyn_lifespan_threshold)

    surfels = _SortedSurfels(
        position=position,
        tangent_u=rotation[..., 0],
        tangent_v=rotation[..., 1],
        normal=rotation[..., 2],
        scale=scale,
        opacity=snaps.opacity[idx],
        color=snaps.color[idx],
        flow=flow,
        dynamic=dynamic.to(DTYPE),
        boxes=_screen_boxes(position, rotation, scale, intr, pose, cfg.sigma_cutoff),
    )
    timings["bin"] = timings.get("bin", 0.0) + (time.perf_counter() - started)
    return surfels, len(snaps)


def _composite_tile(
    surfels: _SortedSurfels,
    origin: torch.Tensor,
    dirs: torch.Tensor,
    bounds: Tuple[int, int, int, int],
    cfg: RenderConfig,
) -> Dict[str, torch.Tensor]:
    """Front-to-back composite of one tile; returns (h, w, ...) planes."""
    y0, y1, x0, x1 = bounds
    h, w = y1 - y0, x1 - x0
    rays = dirs[y0:y1, x0:x1].reshape(-1, 3)
    pixels = rays.shape[0]
    background = torch.tensor(cfg.background, dtype=DTYPE)

    boxes = surfels.boxes
    overlap = (boxes[:, 0] <= x1 - 1) & (boxes[:, 2] >= x0) & (boxes[:, 1] <= y1 - 1) & (boxes[:, 3] >= y0)
    g = torch.nonzero(overlap).squeeze(-1)

    if len(g) == 0:
        return {
            "color": background.expand(h, w, 3).clone(),
            "alpha": torch.zeros((h, w), dtype=DTYPE),
            "depth": torch.zeros((h, w), dtype=DTYPE),
            "normal": torch.zeros((h, w, 3), dtype=DTYPE),
            "flow": torch.zeros((h, w, 2), dtype=DTYPE),
            "dynamic_mask": torch.zeros((h, w), dtype=DTYPE),
        }

    offset = surfels.position[g] - origin
    normal = surfels.normal[g]
    r1 = surfels.tangent_u[g]
    r2 = surfels.tangent_v[g]
    scale = surfels.scale[g]

    # ray / plane intersection, (pixels, gaussians)
    denom = rays @ normal.T
    parallel = denom.abs() < PARALLEL_EPS
    safe_denom = torch.where(parallel, torch.ones_like(denom), denom)
    depth = (offset * normal).sum(-1) / safe_denom
    u = (depth * (rays @ r1.T) - (offset * r1).sum(-1)) / scale[:, 0]
    v = (depth * (rays @ r2.T) - (offset * r2).sum(-1)) / scale[:, 1]

    q = u * u + v * v
    active = (~parallel) & (depth > 0) & (q <= cfg.sigma_cutoff ** 2)
    q = torch.where(active, q, torch.zeros_like(q))
    kernel = (surfels.opacity[g] * torch.exp(-0.5 * q)).clamp(max=cfg.alpha_clamp)
    alpha = torch.where(active, kernel, torch.zeros_like(kernel))

    # exclusive transmittance; contributions stop once T drops below the floor
    through = torch.cumprod(1.0 - alpha, dim=1)
    trans = torch.cat((torch.ones((pixels, 1), dtype=DTYPE), through[:, :-1]), dim=1)
    weight = alpha * trans * (trans.detach() >= cfg.transmittance_floor).to(DTYPE)

    acc = weight.sum(dim=1)
    norm_weight = weight / (acc + WEIGHT_EPS).unsqueeze(-1)

    facing = torch.where(denom > 0, -torch.ones_like(denom), torch.ones_like(denom))
    normal_sum = (weight * facing) @ normal
    normal_out = normal_sum / torch.sqrt((normal_sum * normal_sum).sum(-1, keepdim=True) + NORMAL_EPS)

    color = weight @ surfels.color[g] + (1.0 - acc).unsqueeze(-1) * background
    return {
        "color": color.reshape(h, w, 3),
        "alpha": acc.reshape(h, w),
        "depth": (norm_weight * depth).sum(dim=1).reshape(h, w),
        "normal": normal_out.reshape(h, w, 3),
        "flow": (norm_weight @ surfels.flow[g]).reshape(h, w, 2),
        "dynamic_mask": (norm_weight @ surfels.dynamic[g]).reshape(h, w),
    }


def _tile_grid(height: int, width: int, tile: int) -> List[List[Tuple[int, int, int, int]]]:
    return [
        [(y0, min(y0 + tile, height), x0, min(x0 + tile, width)) for x0 in range(0, width, tile)]
        for y0 in range(0, height, tile)
    ]


def render_differentiable(
    scene: SceneLike,
    intr: CameraIntrinsics,
    pose: CameraPose,
    t: float,
    cfg: Optional[RenderConfig] = None,
    flow_t1: Optional[float] = None,
    timings: Optional[Dict[str, float]] = None,
) -> RenderPlanes:
    """
    Render all planes at time t as torch tensors.

    Args:
        scene: GaussianScene or SceneTensors (possibly requiring grad)
        intr: Camera intrinsics
        pose: World-from-camera pose
        t: Global render time in seconds
        cfg: Render options (settings defaults when None)
        flow_t1: Second timestamp for the flow plane; zero flow when None
        timings: Optional dict accumulating evaluate/bin/composite seconds

    Returns:
        RenderPlanes attached to the autograd graph of the scene tensors

    Raises:
        DomainError: If the image has no pixels
    """
    cfg = cfg or RenderConfig.from_settings()
    height, width = intr.height, intr.width
    if height <= 0 or width <= 0:
        raise DomainError(f"cannot render a {width}x{height} image")

    timings = {} if timings is None else timings
    surfels, total = _prepare(scene, intr, pose, t, cfg, flow_t1, timings)
    prepared = time.perf_counter()

    origin, dirs = pixel_rays(intr, pose)
    origin = torch.as_tensor(origin, dtype=DTYPE)
    dirs = torch.as_tensor(dirs, dtype=DTYPE)
    grid = _tile_grid(height, width, cfg.tile_size)
    flat = [bounds for row in grid for bounds in row]

    def composite(bounds):
        return _composite_tile(surfels, origin, dirs, bounds, cfg)

    if cfg.workers > 1 and not torch.is_grad_enabled():
        def composite_no_grad(bounds):
            # grad mode is thread-local
            with torch.no_grad():
                return composite(bounds)

        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            tiles = list(pool.map(composite_no_grad, flat))
    else:
        tiles = [composite(bounds) for bounds in flat]

    planes = {}
    cols = len(grid[0])
    for key in tiles[0]:
        rows = [
            torch.cat([tiles[r * cols + c][key] for c in range(cols)], dim=1)
            for r in range(len(grid))
        ]
        planes[key] = torch.cat(rows, dim=0)
    finished = time.perf_counter()

    timings["composite"] = timings.get("composite", 0.0) + (finished - prepared)

    logger.debug(
        f"rendered {width}x{height} at t={t:.4f}: {len(surfels)}/{total} Gaussians visible, "
        f"{len(flat)} tiles"
    )
    return RenderPlanes(**planes)


def render(
    scene: SceneLike,
    intr: CameraIntrinsics,
    pose: CameraPose,
    t: float,
    cfg: Optional[RenderConfig] = None,
    flow_t1: Optional[float] = None,
    timings: Optional[Dict[str, float]] = None,
) -> RenderOutput:
    """Render colour, alpha, depth, normal and dynamic-mask planes at time t."""
    with torch.no_grad():
        return render_differentiable(scene, intr, pose, t, cfg, flow_t1, timings).to_output()


def render_flow(
    scene: SceneLike,
    intr: CameraIntrinsics,
    pose: CameraPose,
    t0: float,
    t1: float,
    cfg: Optional[RenderConfig] = None,
) -> np.ndarray:
    """
    Composited optical flow from t0 to t1 in pixels.

    Weights come from the render at t0; each Gaussian contributes the pixel
    displacement of its projected centre between t0 and t1.

    Returns:
        (H, W, 2) flow plane
    """
    return render(scene, intr, pose, t0, cfg, flow_t1=t1).flow


def render_dynamic_mask(
    scene: SceneLike,
    intr: CameraIntrinsics,
    pose: CameraPose,
    t: float,
    cfg: Optional[RenderConfig] = None,
) -> np.ndarray:
    """Composited per-pixel share of fast-moving or short-lived Gaussians, (H, W)."""
    return render(scene, intr, pose, t, cfg).dynamic_mask
