"""
Chronosurf command line.

Every subcommand prints one JSON document on standard out; status and logs
go to standard error. Exit codes: 0 success, 2 usage error, 1 runtime error.
"""
import functools
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional

import click
import numpy as np
from pydantic import ValidationError
from rich import box
from rich.console import Console
from rich.progress import BarColumn, Progress, TextColumn, TimeRemainingColumn
from rich.table import Table

from config.settings import get_settings
from density.control import (
    PatchOpacityGrid,
    aggregate_histogram,
    apply_pruning,
    compare_pruning_strategies,
    load_channels,
    save_channels,
    select_channels,
)
from fitting.trainer import FitConfig, fit
from losses.metrics import evaluate_frame
from render.rasterizer import render
from render.types import RenderConfig
from sceneio.images import read_image, read_mask, write_image
from sceneio.manifest import load_manifest, parse_manifest
from sceneio.scene_file import atomic_write_bytes, read_scene, write_scene
from tokens.attention import token_passthrough_check
from tokens.scheduler import attention_cost, build_layout
from utils.errors import EngineError
from utils.logger import setup_logging

logger = logging.getLogger(__name__)

console = Console(stderr=True)

COLOR_SUFFIXES = (".ppm", ".png")
MASK_SUFFIXES = (".ppm", ".png", ".pfm")


# Utils
def success(m): console.print(f"[green]✓[/green] {m}")
def error(m): console.print(f"[red]✗[/red] {m}")
def info(m): console.print(f"[blue]ℹ[/blue] {m}")


def emit(payload: Dict) -> None:
    """Write the command's JSON result to standard out."""
    click.echo(json.dumps(payload, indent=2))


def handle_errors(command):
    """Map validation errors to usage errors and engine errors to exit code 1."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ValidationError as e:
            raise click.UsageError(str(e)) from None
        except (EngineError, OSError) as e:
            logger.debug("command failed", exc_info=True)
            error(str(e))
            sys.exit(1)

    return wrapper


def _cameras(manifest_path: Path):
    """(stem, intrinsics, pose, timestamp) of every manifest frame; images are not read."""
    manifest = parse_manifest(Path(manifest_path).read_text(encoding="utf-8"))
    return [
        (Path(f.image_path).stem, f.intrinsics.to_intrinsics(), f.pose.to_pose(), f.timestamp_s)
        for f in manifest.frames
    ]


def _color_stems(directory: Path) -> Dict[str, Path]:
    """Colour images of a directory keyed by stem; planes such as a.depth.pfm are skipped."""
    return {
        p.name[: -len(p.suffix)]: p
        for p in sorted(directory.iterdir())
        if p.suffix.lower() in COLOR_SUFFIXES and len(p.suffixes) == 1
    }


# ============================================================================
# GROUP
# ============================================================================

@click.group()
@click.version_option(version="1.0.0")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
def cli(verbose):
    """Chronosurf: dynamic surfel scenes, rendering and fitting."""
    settings = get_settings()
    setup_logging("DEBUG" if verbose else settings.log_level, settings.log_file)


# ============================================================================
# RENDER
# ============================================================================

@cli.command("render")
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--time", "at_time", type=float, default=None, help="Render every camera at this time")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--flow", "flow_t1", type=float, default=None, help="Also write flow towards this time")
@click.option("--dyn-mask", is_flag=True, help="Also write the dynamic mask")
@handle_errors
def render_command(scene_path, manifest_path, at_time, out_dir, flow_t1, dyn_mask):
    """Render a scene from every camera of a manifest."""
    scene = read_scene(scene_path)
    cameras = _cameras(manifest_path)
    settings = get_settings()
    cfg = RenderConfig.from_settings(workers=1)
    out_dir.mkdir(parents=True, exist_ok=True)

    def render_one(camera) -> Dict:
        stem, intr, pose, timestamp = camera
        t = timestamp if at_time is None else at_time
        out = render(scene, intr, pose, t, cfg, flow_t1=flow_t1)
        written = {
            "color": out_dir / f"{stem}.ppm",
            "depth": out_dir / f"{stem}.depth.pfm",
            "normal": out_dir / f"{stem}.normal.pfm",
            "alpha": out_dir / f"{stem}.alpha.pfm",
        }
        write_image(written["color"], out.color)
        write_image(written["depth"], out.depth)
        write_image(written["normal"], out.normal)
        write_image(written["alpha"], out.alpha)
        if flow_t1 is not None:
            written["flow"] = out_dir / f"{stem}.flow.pfm"
            flow = np.concatenate([out.flow, np.zeros(out.flow.shape[:2] + (1,))], axis=-1)
            write_image(written["flow"], flow)
        if dyn_mask:
            written["dynamic_mask"] = out_dir / f"{stem}.dynmask.pfm"
            write_image(written["dynamic_mask"], out.dynamic_mask)
        return {"stem": stem, "time": t, "files": {k: str(v) for k, v in written.items()}}

    with ThreadPoolExecutor(max_workers=settings.render_workers) as pool:
        frames = list(pool.map(render_one, cameras))

    success(f"Rendered {len(frames)} frames of {scene.count} Gaussians to {out_dir}")
    dynamic = scene.dynamic_fraction(cfg.dyn_velocity_threshold, cfg.dyn_lifespan_threshold)
    emit({"gaussians": scene.count, "dynamic_fraction": dynamic, "frames": frames})


# ============================================================================
# FIT
# ============================================================================

@cli.command("fit")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--init", "init_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--iterations", type=int, default=None, help="Override the configured iteration count")
@handle_errors
def fit_command(manifest_path, init_path, config_path, out_path, iterations):
    """Fit an initial scene to a dataset manifest."""
    overrides = {} if iterations is None else {"iterations": iterations}
    cfg = FitConfig.from_yaml(config_path, **overrides)
    _, frames = load_manifest(manifest_path)
    initial = read_scene(init_path)

    with Progress(
        TextColumn("{task.description}"), BarColumn(), TextColumn("{task.fields[loss]}"),
        TimeRemainingColumn(), console=console,
    ) as progress:
        task = progress.add_task("Fitting", total=cfg.iterations, loss="")

        def advance(iteration: int, loss: float) -> None:
            progress.update(task, advance=1, loss=f"loss {loss:.5g}")

        result = fit(initial, frames, cfg, progress=advance)

    write_scene(result.scene, out_path)
    trace_path = out_path.with_suffix(".trace.json")
    atomic_write_bytes(trace_path, json.dumps(result.to_dict(), indent=2).encode("utf-8"))

    success(f"Fitted {result.scene.count} Gaussians, best loss {result.best_loss}")
    emit({
        "scene": str(out_path),
        "trace": str(trace_path),
        "iterations": len(result.loss_trace),
        "best_iteration": result.best_iteration,
        "best_loss": result.best_loss,
    })


# ============================================================================
# PRUNE
# ============================================================================

def _load_grids(path: Path) -> List[PatchOpacityGrid]:
    """Opacity grids from a .npy array or every array of a .npz, each (patches, p*p)."""
    data = np.load(path)
    arrays = [data[key] for key in data.files] if hasattr(data, "files") else [data]
    grids = []
    for values in arrays:
        side = int(round(np.sqrt(values.shape[-1]))) if values.ndim == 2 else 0
        if side * side != values.shape[-1] or values.ndim != 2:
            raise click.UsageError(f"grids must have shape (patches, p*p), got {values.shape}")
        grids.append(PatchOpacityGrid(values=values, patch_size=side))
    return grids


@cli.command("prune")
@click.option("--grids", "grids_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--S", "select", type=click.IntRange(min=1), help="Channels to keep per patch")
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), help="Channel selection JSON")
@click.option("--seed", type=int, default=0, help="Seed of the random baseline")
@click.option("--apply", "apply_mode", is_flag=True, help="Apply a saved selection to a scene")
@click.option("--channels", "channels_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--scene", "scene_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--scene-out", "scene_out", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--patch-size", type=click.IntRange(min=1), default=14, show_default=True)
@handle_errors
def prune_command(grids_path, select, out_path, seed, apply_mode, channels_path, scene_path, scene_out, patch_size):
    """Select per-patch channels from opacity grids, or apply a saved selection."""
    if apply_mode:
        channels_path = channels_path or out_path
        if channels_path is None or scene_path is None or scene_out is None:
            raise click.UsageError("--apply needs --channels (or --out), --scene and --scene-out")
        channels = load_channels(channels_path)
        scene = read_scene(scene_path)
        pruned = apply_pruning(scene, channels, patch_size)
        write_scene(pruned, scene_out)
        success(f"Kept {pruned.count} of {scene.count} Gaussians")
        emit({"original": scene.count, "kept": pruned.count, "ratio": pruned.count / max(1, scene.count), "channels": channels})
        return

    if grids_path is None or select is None or out_path is None:
        raise click.UsageError("prune needs --grids, --S and --out")
    grids = _load_grids(grids_path)
    histogram = aggregate_histogram(grids)
    channels = select_channels(histogram, select)
    save_channels(out_path, channels)
    report = compare_pruning_strategies(grids, select, seed=seed)

    table = Table(box=box.ROUNDED, title="Kept activation")
    table.add_column("Strategy", style="cyan")
    table.add_column("Share", justify="right")
    for name, value in (
        ("histogram", report.histogram_kept_activation),
        ("per-patch", report.per_patch_kept_activation),
        ("random", report.random_kept_activation),
        ("uniform", report.uniform_kept_activation),
    ):
        table.add_row(name, f"{value:.4f}")
    console.print(table)

    emit({"channels": channels, "histogram": histogram.to_dict(), "comparison": report.to_dict(), "out": str(out_path)})


# ============================================================================
# SCHEDULE
# ============================================================================

@cli.command("schedule")
@click.option("--frames", type=click.IntRange(min=1), required=True)
@click.option("--chunks", type=click.IntRange(min=1), required=True)
@click.option("--levels", type=click.IntRange(min=1), required=True)
@click.option("--tokens-per-frame", type=click.IntRange(min=1), required=True)
@click.option("--check", is_flag=True, help="Run random tokens through the layout")
@click.option("--token-dim", type=click.IntRange(min=1), default=8, show_default=True)
@handle_errors
def schedule_command(frames, chunks, levels, tokens_per_frame, check, token_dim):
    """Token layout and attention cost of a frame window."""
    layout = build_layout(frames, chunks, levels, tokens_per_frame)
    cost = attention_cost(layout)
    payload = {"layout": layout.to_dict(), "cost": cost.to_dict(), "ratio": float(cost.ratio)}
    if check:
        payload["check"] = token_passthrough_check(layout, token_dim).to_dict()
    info(f"{layout.total_tokens} tokens, attention pairs {cost.ratio} of all-to-all")
    emit(payload)


# ============================================================================
# METRICS
# ============================================================================

def _find_mask(mask_dir: Path, stem: str) -> Optional[Path]:
    for suffix in MASK_SUFFIXES:
        candidate = mask_dir / f"{stem}.mask{suffix}"
        if candidate.is_file():
            return candidate
    return None


def _mean(values) -> Optional[float]:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


@cli.command("metrics")
@click.option("--pred", "pred_dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--target", "target_dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--depth", is_flag=True, help="Compare <stem>.depth.pfm planes")
@click.option("--normal", is_flag=True, help="Compare <stem>.normal.pfm planes")
@click.option("--mask", "mask_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), default=None)
@handle_errors
def metrics_command(pred_dir, target_dir, depth, normal, mask_dir):
    """Compare predicted images against targets."""
    targets = _color_stems(target_dir)
    predictions = _color_stems(pred_dir)
    missing = sorted(set(targets) - set(predictions))
    if missing:
        raise EngineError(f"no prediction for {', '.join(missing)}")
    if not targets:
        raise EngineError(f"no colour images in {target_dir}")

    frames = {}
    for stem, target_path in targets.items():
        mask_path = _find_mask(mask_dir, stem) if mask_dir else None
        frames[stem] = evaluate_frame(
            read_image(predictions[stem]),
            read_image(target_path),
            pred_depth=read_image(pred_dir / f"{stem}.depth.pfm") if depth else None,
            target_depth=read_image(target_dir / f"{stem}.depth.pfm") if depth else None,
            pred_normal=read_image(pred_dir / f"{stem}.normal.pfm") if normal else None,
            target_normal=read_image(target_dir / f"{stem}.normal.pfm") if normal else None,
            mask=read_mask(mask_path) if mask_path else None,
        )

    aggregate = {key: _mean(r[key] for r in frames.values()) for key in ("psnr", "ssim", "depth_rmse", "normal_angle_deg")}
    info(f"{len(frames)} frames, mean PSNR {aggregate['psnr']:.2f} dB")
    emit({"frames": frames, "aggregate": aggregate})


# ============================================================================
# BENCH
# ============================================================================

@cli.command("bench")
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--repeat", type=click.IntRange(min=1), default=1, show_default=True)
@handle_errors
def bench_command(scene_path, manifest_path, repeat):
    """Time rendering of every manifest camera."""
    scene = read_scene(scene_path)
    cameras = _cameras(manifest_path)
    cfg = RenderConfig.from_settings()
    timings: Dict[str, float] = {}

    start = time.perf_counter()
    for _ in range(repeat):
        for _, intr, pose, t in cameras:
            render(scene, intr, pose, t, cfg, timings=timings)
    elapsed = time.perf_counter() - start

    rendered = repeat * len(cameras)
    table = Table(box=box.ROUNDED, title="Render timings")
    table.add_column("Stage", style="cyan")
    table.add_column("Seconds", justify="right")
    for stage, seconds in timings.items():
        table.add_row(stage, f"{seconds:.4f}")
    console.print(table)

    emit({
        "gaussians": scene.count,
        "frames": rendered,
        "seconds": elapsed,
        "frames_per_second": rendered / elapsed if elapsed > 0 else None,
        "timings": timings,
    })
