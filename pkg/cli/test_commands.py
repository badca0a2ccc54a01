"""
Tests for the command line, run in-process through click's CliRunner.
"""
import json

import numpy as np
import pytest
from click.testing import CliRunner

from cli.commands import cli
from fitting.trainer import synthesize_frames
from model.camera import CameraIntrinsics, CameraPose
from model.gaussian import Gaussian4D, GaussianScene, random_scene
from sceneio.images import read_image
from sceneio.manifest import write_dataset
from sceneio.scene_file import read_scene, write_scene


def _payload(result) -> dict:
    """The JSON document of a run; status lines on stderr may share the captured text."""
    assert result.exit_code == 0, result.output
    text = result.stdout
    return json.loads(text[text.index("{\n"):])


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def dataset(tmp_path, facing_surfel):
    """Two 16x16 frames of one surfel, written with a manifest, plus the scene file."""
    intr = CameraIntrinsics.centered(16, 16, focal=16.0)
    frames = synthesize_frames(facing_surfel, [(intr, CameraPose())], [0.0, 0.1])
    manifest = write_dataset(frames, tmp_path / "data")
    scene_path = tmp_path / "surfel.4dgt"
    write_scene(facing_surfel, scene_path)
    return manifest, scene_path


# ============================================================================
# Group
# ============================================================================

class TestGroup:
    """Test the command group itself."""

    def test_help(self, runner):
        result = runner.invoke(cli, ["--help"])
        assert result.exit_code == 0
        for name in ("render", "fit", "prune", "schedule", "metrics", "bench"):
            assert name in result.output

    def test_unknown_flag_is_usage_error(self, runner):
        assert runner.invoke(cli, ["schedule", "--bogus"]).exit_code == 2

    def test_missing_option_is_usage_error(self, runner):
        assert runner.invoke(cli, ["schedule", "--frames", "64"]).exit_code == 2


# ============================================================================
# Schedule
# ============================================================================

class TestSchedule:
    """Test the schedule command."""

    def test_canonical_ratio(self, runner):
        args = ["schedule", "--frames", "64", "--chunks", "4", "--levels", "3", "--tokens-per-frame", "1296"]
        data = _payload(runner.invoke(cli, args))
        assert data["ratio"] == 0.4375
        assert data["cost"]["ratio_exact"] == "7/16"
        assert data["layout"]["total_tokens"] == 64 * 1296

    def test_passthrough_check(self, runner):
        args = ["schedule", "--frames", "8", "--chunks", "4", "--levels", "2",
                "--tokens-per-frame", "4", "--check", "--token-dim", "4"]
        data = _payload(runner.invoke(cli, args))
        assert data["check"]["ok"] is True

    def test_invalid_layout_is_runtime_error(self, runner):
        args = ["schedule", "--frames", "10", "--chunks", "4", "--levels", "1", "--tokens-per-frame", "4"]
        assert runner.invoke(cli, args).exit_code == 1


# ============================================================================
# Render
# ============================================================================

class TestRender:
    """Test the render command."""

    def test_empty_scene_renders_background(self, runner, tmp_path, dataset):
        manifest, _ = dataset
        empty = tmp_path / "empty.4dgt"
        write_scene(GaussianScene.empty(), empty)
        out = tmp_path / "out"
        data = _payload(runner.invoke(cli, ["render", "--scene", str(empty), "--manifest", str(manifest), "--out", str(out)]))
        assert data["gaussians"] == 0
        assert len(data["frames"]) == 2
        assert np.all(read_image(out / "frame_0000.ppm") == 0.0)
        assert np.all(read_image(out / "frame_0001.alpha.pfm") == 0.0)

    def test_planes_and_own_timestamps(self, runner, tmp_path, dataset):
        manifest, scene_path = dataset
        out = tmp_path / "out"
        args = ["render", "--scene", str(scene_path), "--manifest", str(manifest), "--out", str(out),
                "--flow", "0.5", "--dyn-mask"]
        data = _payload(runner.invoke(cli, args))
        assert [f["time"] for f in data["frames"]] == [0.0, 0.1]
        assert data["dynamic_fraction"] == 0.0
        for suffix in (".ppm", ".depth.pfm", ".normal.pfm", ".alpha.pfm", ".flow.pfm", ".dynmask.pfm"):
            assert (out / f"frame_0000{suffix}").is_file(), suffix
        flow = read_image(out / "frame_0000.flow.pfm")
        assert flow.shape == (16, 16, 3)
        assert np.all(flow[..., 2] == 0.0)
        assert read_image(out / "frame_0000.alpha.pfm").max() > 0.5

    def test_reports_dynamic_fraction(self, runner, tmp_path, dataset):
        manifest, _ = dataset
        scene = GaussianScene.from_gaussians([
            Gaussian4D(position=[0.0, 0.0, 2.0], scale=[0.2, 0.2]),
            Gaussian4D(position=[0.3, 0.0, 2.0], scale=[0.2, 0.2], velocity=[1.0, 0.0, 0.0]),
        ])
        scene_path = tmp_path / "moving.4dgt"
        write_scene(scene, scene_path)
        args = ["render", "--scene", str(scene_path), "--manifest", str(manifest), "--out", str(tmp_path / "out")]
        data = _payload(runner.invoke(cli, args))
        assert data["dynamic_fraction"] == 0.5

    def test_fixed_time(self, runner, tmp_path, dataset):
        manifest, scene_path = dataset
        args = ["render", "--scene", str(scene_path), "--manifest", str(manifest),
                "--out", str(tmp_path / "out"), "--time", "0.25"]
        data = _payload(runner.invoke(cli, args))
        assert [f["time"] for f in data["frames"]] == [0.25, 0.25]

    def test_corrupt_scene_is_runtime_error(self, runner, tmp_path, dataset):
        manifest, _ = dataset
        bad = tmp_path / "bad.4dgt"
        bad.write_bytes(b"nope")
        result = runner.invoke(cli, ["render", "--scene", str(bad), "--manifest", str(manifest), "--out", str(tmp_path / "o")])
        assert result.exit_code == 1


# ============================================================================
# Fit
# ============================================================================

class TestFit:
    """Test the fit command."""

    def test_writes_scene_and_trace(self, runner, tmp_path, dataset, facing_surfel):
        manifest, _ = dataset
        init = tmp_path / "init.4dgt"
        write_scene(facing_surfel.replace(color=np.array([[0.5, 0.5, 0.5]])), init)
        out = tmp_path / "fitted.4dgt"
        args = ["fit", "--manifest", str(manifest), "--init", str(init), "--out", str(out), "--iterations", "2"]
        data = _payload(runner.invoke(cli, args))
        assert data["iterations"] == 2
        assert read_scene(out).count == 1
        trace = json.loads((tmp_path / "fitted.trace.json").read_text())
        assert len(trace["loss_trace"]) == 2
        assert trace["best_loss"] == data["best_loss"]

    def test_invalid_override_is_usage_error(self, runner, tmp_path, dataset):
        manifest, scene_path = dataset
        args = ["fit", "--manifest", str(manifest), "--init", str(scene_path),
                "--out", str(tmp_path / "x.4dgt"), "--iterations", "-1"]
        assert runner.invoke(cli, args).exit_code == 2


# ============================================================================
# Prune
# ============================================================================

class TestPrune:
    """Test channel selection and its application."""

    def test_select_and_apply(self, runner, tmp_path):
        rng = np.random.default_rng(0)
        grids = tmp_path / "grids.npz"
        first = rng.uniform(0.0, 0.2, size=(6, 4))
        first[:, 1] = 0.9
        first[:, 3] = 0.8
        np.savez(grids, a=first, b=rng.uniform(0.0, 1.0, size=(3, 4)))
        channels = tmp_path / "channels.json"

        data = _payload(runner.invoke(cli, ["prune", "--grids", str(grids), "--S", "2", "--out", str(channels)]))
        assert data["channels"] == json.loads(channels.read_text())
        assert len(data["channels"]) == 2
        assert data["histogram"]["total_patches"] == 9

        scene = tmp_path / "scene.4dgt"
        write_scene(random_scene(12, rng), scene)
        pruned = tmp_path / "pruned.4dgt"
        args = ["prune", "--apply", "--channels", str(channels), "--scene", str(scene),
                "--scene-out", str(pruned), "--patch-size", "2"]
        applied = _payload(runner.invoke(cli, args))
        assert applied["kept"] == 6
        assert read_scene(pruned).count == 6

    def test_apply_needs_scene(self, runner, tmp_path):
        channels = tmp_path / "channels.json"
        channels.write_text("[0]")
        assert runner.invoke(cli, ["prune", "--apply", "--channels", str(channels)]).exit_code == 2

    def test_bad_grid_shape(self, runner, tmp_path):
        grids = tmp_path / "grids.npy"
        np.save(grids, np.zeros((4, 3)))
        result = runner.invoke(cli, ["prune", "--grids", str(grids), "--S", "1", "--out", str(tmp_path / "c.json")])
        assert result.exit_code == 2


# ============================================================================
# Metrics and Bench
# ============================================================================

class TestMetrics:
    """Test the metrics and bench commands."""

    def test_identical_directories(self, runner, dataset):
        manifest, _ = dataset
        data_dir = str(manifest.parent)
        data = _payload(runner.invoke(cli, ["metrics", "--pred", data_dir, "--target", data_dir, "--depth"]))
        assert set(data["frames"]) == {"frame_0000", "frame_0001"}
        assert data["aggregate"]["psnr"] == 99.0
        assert data["aggregate"]["ssim"] == pytest.approx(1.0)
        assert data["aggregate"]["depth_rmse"] == 0.0
        assert data["aggregate"]["normal_angle_deg"] is None

    def test_missing_prediction(self, runner, tmp_path, dataset):
        manifest, _ = dataset
        empty = tmp_path / "empty"
        empty.mkdir()
        result = runner.invoke(cli, ["metrics", "--pred", str(empty), "--target", str(manifest.parent)])
        assert result.exit_code == 1

    def test_bench(self, runner, dataset):
        manifest, scene_path = dataset
        data = _payload(runner.invoke(cli, ["bench", "--scene", str(scene_path), "--manifest", str(manifest), "--repeat", "2"]))
        assert data["frames"] == 4
        assert data["gaussians"] == 1
        assert data["seconds"] > 0.0
