"""
Unit tests for training losses and warm-up.
"""
import math

import numpy as np
import pytest
import torch

from losses.losses import (
    LossWeights,
    SSIM_K1,
    SSIM_K2,
    expert_losses,
    mse_loss,
    reg_losses,
    ssim,
    total_loss,
    warmup,
)
from model.camera import CameraIntrinsics, CameraPose, Frame
from model.gaussian import Gaussian4D, GaussianScene, random_scene
from render.rasterizer import render
from render.types import RenderPlanes
from utils.errors import DomainError


def _ssim_oracle(a: np.ndarray, b: np.ndarray) -> float:
    """Scalar sliding-window SSIM of single-channel images."""
    coords = np.arange(11) - 5
    g = np.exp(-(coords ** 2) / (2 * 1.5 ** 2))
    g /= g.sum()
    w = np.outer(g, g)
    c1, c2 = SSIM_K1 ** 2, SSIM_K2 ** 2
    values = []
    for i in range(a.shape[0] - 10):
        for j in range(a.shape[1] - 10):
            pa, pb = a[i:i + 11, j:j + 11], b[i:i + 11, j:j + 11]
            mu_a, mu_b = np.sum(w * pa), np.sum(w * pb)
            var_a = np.sum(w * (pa - mu_a) ** 2)
            var_b = np.sum(w * (pb - mu_b) ** 2)
            cov = np.sum(w * (pa - mu_a) * (pb - mu_b))
            values.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(values))


def _random_batch(seed: int, frames: int = 2, size: int = 16):
    """Random render planes and matching target frames with depth and normal targets."""
    rng = np.random.default_rng(seed)
    intr = CameraIntrinsics.centered(size, size, focal=float(size))
    planes, targets = [], []
    for k in range(frames):
        planes.append(
            RenderPlanes(
                color=torch.as_tensor(rng.uniform(size=(size, size, 3))),
                alpha=torch.ones(size, size, dtype=torch.float64),
                depth=torch.as_tensor(rng.uniform(1.0, 3.0, size=(size, size))),
                normal=torch.as_tensor(rng.normal(size=(size, size, 3))),
                flow=torch.zeros(size, size, 2, dtype=torch.float64),
                dynamic_mask=torch.zeros(size, size, dtype=torch.float64),
            )
        )
        targets.append(
            Frame(
                image=rng.uniform(size=(size, size, 3)),
                intrinsics=intr,
                pose=CameraPose(),
                timestamp=float(k),
                depth_target=rng.uniform(1.0, 3.0, size=(size, size)),
                normal_target=rng.normal(size=(size, size, 3)),
            )
        )
    return planes, targets


# ============================================================================
# Photometric Terms
# ============================================================================

class TestPhotometric:
    """Test MSE and SSIM."""

    def test_mse_identical(self):
        img = np.random.default_rng(0).uniform(size=(4, 4, 3))
        assert float(mse_loss(img, img)) == 0.0

    def test_mse_zeros_ones(self):
        assert float(mse_loss(np.zeros((3, 3, 3)), np.ones((3, 3, 3)))) == 1.0

    def test_mse_flat_mean(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(size=(3, 5, 5, 3))
        b = rng.uniform(size=(3, 5, 5, 3))
        framewise = float(mse_loss(list(a), list(b)))
        assert framewise == pytest.approx(np.mean((a - b) ** 2), abs=1e-9)

    def test_mse_ignores_pixels_outside_mask(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(size=(6, 6, 3))
        b = a.copy()
        b[:, 3:] += 0.5
        mask = np.zeros((6, 6), dtype=bool)
        mask[:, :3] = True
        assert float(mse_loss(a, b, mask)) == 0.0
        assert float(mse_loss(a, b, ~mask)) == pytest.approx(0.25)
        assert float(mse_loss(a, b)) == pytest.approx(0.125)

    def test_mse_per_frame_masks(self):
        a = [np.zeros((2, 2, 3)), np.zeros((2, 2, 3))]
        b = [np.ones((2, 2, 3)), np.ones((2, 2, 3))]
        b[0][0, 0] = 3.0
        only_corner = np.zeros((2, 2), dtype=bool)
        only_corner[0, 0] = True
        assert float(mse_loss(a, b, [only_corner, None])) == pytest.approx((9.0 + 1.0) / 2)
        assert float(mse_loss(a, b, [np.zeros((2, 2), dtype=bool), None])) == pytest.approx(0.5)

    def test_mse_mask_validation(self):
        img = np.zeros((4, 4, 3))
        with pytest.raises(DomainError):
            mse_loss(img, img, np.ones((3, 4), dtype=bool))
        with pytest.raises(DomainError):
            mse_loss([img, img], [img, img], [np.ones((4, 4), dtype=bool)])

    def test_mse_shape_mismatch(self):
        with pytest.raises(DomainError):
            mse_loss(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_ssim_identical(self):
        img = np.random.default_rng(2).uniform(size=(16, 16, 3))
        assert float(ssim(img, img)) == pytest.approx(1.0, abs=1e-12)

    def test_ssim_symmetric(self):
        rng = np.random.default_rng(3)
        a, b = rng.uniform(size=(20, 18, 3)), rng.uniform(size=(20, 18, 3))
        assert abs(float(ssim(a, b)) - float(ssim(b, a))) <= 1e-12

    def test_ssim_constant_images(self):
        c1 = SSIM_K1 ** 2
        value = float(ssim(np.zeros((12, 12)), np.ones((12, 12))))
        assert value == pytest.approx(c1 / (1.0 + c1), rel=1e-6)

    def test_ssim_matches_sliding_window(self):
        rng = np.random.default_rng(4)
        a, b = rng.uniform(size=(14, 13)), rng.uniform(size=(14, 13))
        assert float(ssim(a, b)) == pytest.approx(_ssim_oracle(a, b), abs=1e-9)

    def test_ssim_bounded(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            value = float(ssim(rng.uniform(size=(12, 12, 3)), rng.uniform(size=(12, 12, 3))))
            assert -1.0 <= value <= 1.0

    def test_ssim_too_small(self):
        with pytest.raises(DomainError):
            ssim(np.zeros((10, 20)), np.zeros((10, 20)))


# ============================================================================
# Regularisers and Guidance
# ============================================================================

class TestRegularisers:
    """Test motion, lifespan and expert terms."""

    def test_static_scene(self):
        scene = random_scene(8, np.random.default_rng(0), dynamic=False)
        l_v, l_w, l_l = reg_losses(scene)
        assert float(l_v) == 0.0
        assert float(l_w) == 0.0
        assert float(l_l) == pytest.approx(1e-6)

    def test_velocity_l1(self):
        scene = GaussianScene.from_gaussians([Gaussian4D(position=[0, 0, 1], scale=[0.1, 0.1], velocity=[1.0, -2.0, 3.0])])
        assert float(reg_losses(scene)[0]) == pytest.approx(6.0)

    def test_lifespan_reciprocal_mean(self):
        scene = GaussianScene.from_gaussians(
            [
                Gaussian4D(position=[0, 0, 1], scale=[0.1, 0.1], lifespan=1.0),
                Gaussian4D(position=[0, 0, 2], scale=[0.1, 0.1], lifespan=2.0),
            ]
        )
        assert float(reg_losses(scene)[2]) == pytest.approx(0.75)

    def test_lifespan_strictly_monotone(self):
        scene = random_scene(6, np.random.default_rng(1))
        longer = scene.lifespan.copy()
        longer[3] += 0.5
        assert float(reg_losses(scene.replace(lifespan=longer))[2]) < float(reg_losses(scene)[2])

    def test_lifespan_gradient_closed_form(self):
        scene = random_scene(5, np.random.default_rng(2))
        st = scene.to_tensors()
        st.lifespan.requires_grad_(True)
        reg_losses(st)[2].backward()
        expected = -(1.0 / scene.count) / scene.lifespan ** 2
        assert np.allclose(st.lifespan.grad.numpy(), expected, rtol=1e-12)

    def test_empty_scene(self):
        assert all(float(term) == 0.0 for term in reg_losses(GaussianScene.empty()))

    def test_expert_identical(self):
        depth = np.random.default_rng(3).uniform(size=(4, 4))
        normal = np.random.default_rng(4).normal(size=(4, 4, 3))
        l_d, l_n = expert_losses(depth, depth, normal, normal)
        assert float(l_d) == 0.0 and float(l_n) == 0.0

    def test_expert_unit_offset(self):
        depth = np.random.default_rng(5).uniform(size=(4, 4))
        normal = np.zeros((4, 4, 3))
        l_d, _ = expert_losses(depth + 1.0, depth, normal, normal)
        assert float(l_d) == pytest.approx(1.0)


# ============================================================================
# Warm-up and Total
# ============================================================================

class TestTotal:
    """Test warm-up and the weighted total."""

    def test_warmup_schedule(self):
        weights = LossWeights()
        assert all(v == 0.0 for v in warmup(0, weights).values())
        half = warmup(1250, weights)
        assert half["lpips"] == pytest.approx(1.0)
        assert half["normal"] == pytest.approx(0.005)
        assert warmup(2500, weights)["depth"] == pytest.approx(0.1)
        assert warmup(10_000, weights)["ssim"] == pytest.approx(0.2)

    def test_warmup_monotone(self):
        weights = LossWeights()
        values = [warmup(step, weights)["velocity"] for step in range(0, 3000, 100)]
        assert values == sorted(values)
        assert max(values) == 1.0

    def test_warmup_rejects_negative_step(self):
        with pytest.raises(DomainError):
            warmup(-1, LossWeights())

    def test_weights_validated(self):
        with pytest.raises(ValueError):
            LossWeights(ssim=-1.0)

    def test_weights_from_yaml(self):
        assert LossWeights.from_yaml() == LossWeights()

    def test_perfect_static_render(self, small_camera):
        intr, pose = small_camera
        scene = random_scene(6, np.random.default_rng(6), dynamic=False)
        out = render(scene, intr, pose, 0.0)
        frame = Frame(image=out.color, intrinsics=intr, pose=pose, timestamp=0.0)
        planes = RenderPlanes(**{k: torch.as_tensor(v) for k, v in vars(out).items()})
        breakdown = total_loss([planes], [frame], scene, step=0)
        assert breakdown.value == pytest.approx(0.0, abs=1e-12)
        assert set(breakdown.disabled) == {"lpips", "depth", "normal"}

    def test_total_matches_weighted_sum(self):
        planes, targets = _random_batch(7)
        scene = random_scene(10, np.random.default_rng(8))
        breakdown = total_loss(planes, targets, scene, step=2500)

        mse = np.mean([np.mean((p.color.numpy() - f.image) ** 2) for p, f in zip(planes, targets)])
        depth = np.mean([np.mean((p.depth.numpy() - f.depth_target) ** 2) for p, f in zip(planes, targets)])
        normal = np.mean([np.mean((p.normal.numpy() - f.normal_target) ** 2) for p, f in zip(planes, targets)])
        reg_v = np.abs(scene.velocity).sum(axis=1).mean()
        reg_w = np.abs(scene.ang_velocity).sum(axis=1).mean()
        reg_l = (1.0 / scene.lifespan).mean()
        one_minus_ssim = float(breakdown.terms["ssim"])

        expected = mse + 0.2 * one_minus_ssim + reg_v + reg_w + reg_l + 0.1 * depth + 0.01 * normal
        assert breakdown.value == pytest.approx(expected, abs=1e-9)
        assert float(breakdown.terms["mse"]) == pytest.approx(mse, abs=1e-12)
        assert breakdown.disabled == ["lpips"]

        by_hand = float(breakdown.terms["mse"]) + sum(
            breakdown.weights[name] * float(term) for name, term in breakdown.terms.items() if name != "mse"
        )
        assert breakdown.value == pytest.approx(by_hand, abs=1e-9)

    def test_doubled_batch_same_value(self):
        planes, targets = _random_batch(9, frames=1)
        scene = random_scene(4, np.random.default_rng(10))
        single = total_loss(planes, targets, scene, step=2500).value
        doubled = total_loss(planes * 2, targets * 2, scene, step=2500).value
        assert doubled == pytest.approx(single, abs=1e-12)

    def test_perceptual_plugin(self):
        planes, targets = _random_batch(11, frames=1)
        scene = random_scene(4, np.random.default_rng(12))

        def l1(a, b):
            return (a - b).abs().mean()

        breakdown = total_loss(planes, targets, scene, step=2500, perceptual=l1)
        assert "lpips" not in breakdown.disabled
        expected = np.abs(planes[0].color.numpy() - targets[0].image).mean()
        assert float(breakdown.terms["lpips"]) == pytest.approx(expected)

    def test_to_dict(self):
        planes, targets = _random_batch(13, frames=1)
        report = total_loss(planes, targets, random_scene(3, np.random.default_rng(14)), step=10).to_dict()
        assert set(report) == {"total", "terms", "weights", "disabled"}
        assert math.isfinite(report["total"])

    def test_frame_mask_limits_pixel_terms(self):
        planes, targets = _random_batch(16, frames=1)
        mask = np.zeros((16, 16), dtype=bool)
        mask[4:12, 2:10] = True
        targets[0].mask = mask
        breakdown = total_loss(planes, targets, random_scene(3, np.random.default_rng(17)), step=2500)

        p, f = planes[0], targets[0]
        mse = np.mean((p.color.numpy()[mask] - f.image[mask]) ** 2)
        depth = np.mean((p.depth.numpy()[mask] - f.depth_target[mask]) ** 2)
        normal = np.mean((p.normal.numpy()[mask] - f.normal_target[mask]) ** 2)
        assert float(breakdown.terms["mse"]) == pytest.approx(mse, abs=1e-12)
        assert float(breakdown.terms["depth"]) == pytest.approx(depth, abs=1e-12)
        assert float(breakdown.terms["normal"]) == pytest.approx(normal, abs=1e-12)

    def test_frame_count_mismatch(self):
        planes, targets = _random_batch(15, frames=2)
        with pytest.raises(DomainError):
            total_loss(planes[:1], targets, GaussianScene.empty(), step=0)
