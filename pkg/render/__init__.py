"""
Surfel rasterization: tiled renderer, brute-force oracle and render options.
"""
from render.oracle import render_oracle
from render.rasterizer import (
    intersect_surfel,
    render,
    render_differentiable,
    render_dynamic_mask,
    render_flow,
    splat_alpha,
)
from render.types import RenderConfig, RenderOutput, RenderPlanes

__all__ = [
    "render_oracle",
    "intersect_surfel",
    "render",
    "render_differentiable",
    "render_dynamic_mask",
    "render_flow",
    "splat_alpha",
    "RenderConfig",
    "RenderOutput",
    "RenderPlanes",
]
