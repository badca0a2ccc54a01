"""
Brute-force reference renderer.

Every pixel intersects every Gaussian, sorts its own hits by ray distance and
composites them one at a time. Slow, tile-free and written in numpy, it is
the yardstick the tiled renderer is tested against.
"""
import logging
from typing import Optional

import numpy as np

from model.camera import CameraIntrinsics, CameraPose, pixel_rays
from model.gaussian import SceneLike, as_tensors, evaluate_at_time, temporal_position
from render.rasterizer import NORMAL_EPS, PARALLEL_EPS, WEIGHT_EPS
from render.types import RenderConfig, RenderOutput

logger = logging.getLogger(__name__)

ROW_CHUNK = 512


def _project(points: np.ndarray, intr: CameraIntrinsics, pose: CameraPose):
    cam = (points - pose.center) @ pose.rotation_matrix()
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * cam[:, 0] / z + intr.cx - 0.5
        v = intr.fy * cam[:, 1] / z + intr.cy - 0.5
    return np.stack([u, v], axis=-1), z


def render_oracle(
    scene: SceneLike,
    intr: CameraIntrinsics,
    pose: CameraPose,
    t: float,
    cfg: Optional[RenderConfig] = None,
    flow_t1: Optional[float] = None,
) -> RenderOutput:
    """
    Per-pixel exact compositing of all Gaussians at time t.

    Args:
        scene: Scene to render
        intr: Camera intrinsics
        pose: World-from-camera pose
        t: Global render time
        cfg: Render options (settings defaults when None)
        flow_t1: Second timestamp for the flow plane

    Returns:
        RenderOutput with the same planes as the tiled renderer
    """
    cfg = cfg or RenderConfig.from_settings()
    st = as_tensors(scene)
    snaps = evaluate_at_time(st, t, cfg.o_th)
    height, width = intr.height, intr.width
    out = RenderOutput.blank(height, width, cfg.background)
    if len(snaps) == 0:
        return out

    position = snaps.position.detach().numpy()
    rotation = snaps.rotation.detach().numpy()
    opacity = snaps.opacity.detach().numpy()
    scale = snaps.scale.detach().numpy()
    color = snaps.color.detach().numpy()
    tangent_u, tangent_v, normal = rotation[..., 0], rotation[..., 1], rotation[..., 2]

    flow = np.zeros((len(snaps), 2))
    if flow_t1 is not None:
        later = temporal_position(st.position, st.velocity, st.t_center, float(flow_t1) - st.time_base)
        uv0, z0 = _project(position, intr, pose)
        uv1, z1 = _project(later.detach().numpy(), intr, pose)
        ok = (z0 > 0) & (z1 > 0)
        flow[ok] = uv1[ok] - uv0[ok]

    velocity = st.velocity.detach().numpy()
    lifespan = st.lifespan.detach().numpy()
    dynamic = (np.linalg.norm(velocity, axis=-1) > cfg.dyn_velocity_threshold) | (
        lifespan < cfg.dyn_lifespan_threshold
    )

    origin, dirs = pixel_rays(intr, pose)
    rays = dirs.reshape(-1, 3)
    offset = position - origin
    background = np.asarray(cfg.background, dtype=np.float64)

    color_out = out.color.reshape(-1, 3)
    alpha_out = out.alpha.reshape(-1)
    depth_out = out.depth.reshape(-1)
    normal_out = out.normal.reshape(-1, 3)
    flow_out = out.flow.reshape(-1, 2)
    dyn_out = out.dynamic_mask.reshape(-1)

    for start in range(0, rays.shape[0], ROW_CHUNK):
        d = rays[start:start + ROW_CHUNK]
        denom = d @ normal.T
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = (offset * normal).sum(-1) / denom
            u = (lam * (d @ tangent_u.T) - (offset * tangent_u).sum(-1)) / scale[:, 0]
            v = (lam * (d @ tangent_v.T) - (offset * tangent_v).sum(-1)) / scale[:, 1]
            hit = (np.abs(denom) >= PARALLEL_EPS) & (lam > 0)
            q = np.where(hit, u * u + v * v, np.inf)

        for row in range(d.shape[0]):
            inside = np.nonzero(q[row] <= cfg.sigma_cutoff ** 2)[0]
            if len(inside) == 0:
                continue
            inside = inside[np.argsort(lam[row, inside], kind="stable")]

            trans = 1.0
            acc_color = np.zeros(3)
            acc_normal = np.zeros(3)
            acc_flow = np.zeros(2)
            acc_depth = 0.0
            acc_dyn = 0.0
            for i in inside:
                if trans < cfg.transmittance_floor:
                    break
                alpha = min(cfg.alpha_clamp, opacity[i] * np.exp(-0.5 * q[row, i]))
                weight = alpha * trans
                facing = -1.0 if denom[row, i] > 0 else 1.0
                acc_color += weight * color[i]
                acc_normal += weight * facing * normal[i]
                acc_flow += weight * flow[i]
                acc_depth += weight * lam[row, i]
                acc_dyn += weight * float(dynamic[i])
                trans *= 1.0 - alpha

            p = start + row
            acc = 1.0 - trans
            color_out[p] = acc_color + trans * background
            alpha_out[p] = acc
            depth_out[p] = acc_depth / (acc + WEIGHT_EPS)
            normal_out[p] = acc_normal / np.sqrt(acc_normal @ acc_normal + NORMAL_EPS)
            flow_out[p] = acc_flow / (acc + WEIGHT_EPS)
            dyn_out[p] = acc_dyn / (acc + WEIGHT_EPS)

    logger.debug(f"oracle rendered {width}x{height} with {len(snaps)} Gaussians")
    return out
