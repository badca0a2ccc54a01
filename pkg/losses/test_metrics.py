"""
Unit tests for evaluation metrics.
"""
import numpy as np
import pytest

from losses.metrics import depth_rmse, evaluate_frame, normal_angle_deg, psnr, ssim_index
from utils.errors import DomainError


class TestPSNR:
    """Test PSNR closed forms and the cap."""

    def test_unit_mse(self):
        assert psnr(np.zeros((4, 4)), np.ones((4, 4))) == pytest.approx(0.0)

    def test_identical_capped(self):
        img = np.random.default_rng(0).uniform(size=(8, 8, 3))
        assert psnr(img, img) == 99.0
        assert psnr(img, img, cap=50.0) == 50.0

    def test_twenty_db(self):
        assert psnr(np.zeros((4, 4)), np.full((4, 4), 0.1)) == pytest.approx(20.0)

    def test_decreasing_in_error(self):
        values = [psnr(np.zeros(10), np.full(10, e)) for e in (0.01, 0.05, 0.1, 0.5)]
        assert values == sorted(values, reverse=True)

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            psnr(np.zeros(3), np.zeros(4))

    def test_mask_ignores_outside_error(self):
        a = np.zeros((4, 4, 3))
        b = a.copy()
        b[2:] = 0.5
        mask = np.zeros((4, 4), dtype=bool)
        mask[:2] = True
        assert psnr(a, b, mask=mask) == 99.0
        assert psnr(a, b, mask=~mask) == pytest.approx(10.0 * np.log10(4.0))

    def test_empty_mask(self):
        with pytest.raises(DomainError, match="no pixels"):
            psnr(np.zeros((2, 2)), np.ones((2, 2)), mask=np.zeros((2, 2), dtype=bool))


class TestGeometryMetrics:
    """Test depth RMSE and normal angle error."""

    def test_depth_identical(self):
        depth = np.random.default_rng(1).uniform(1.0, 2.0, size=(5, 5))
        assert depth_rmse(depth, depth) == 0.0

    def test_depth_constant_offset(self):
        depth = np.random.default_rng(2).uniform(1.0, 2.0, size=(5, 5))
        assert depth_rmse(depth + 0.3, depth) == pytest.approx(0.3)

    def test_depth_half_mask(self):
        rng = np.random.default_rng(3)
        pred, target = rng.uniform(1.0, 2.0, size=(2, 6, 6))
        mask = np.zeros((6, 6), dtype=bool)
        mask[:3] = True
        expected = np.sqrt(np.mean((pred[:3] - target[:3]) ** 2))
        assert depth_rmse(pred, target, mask) == pytest.approx(expected)

    def test_depth_skips_empty_target(self):
        target = np.array([[1.0, 0.0]])
        assert depth_rmse(np.array([[1.5, 9.0]]), target) == pytest.approx(0.5)

    def test_depth_no_valid_pixels(self):
        with pytest.raises(DomainError):
            depth_rmse(np.ones((2, 2)), np.zeros((2, 2)))

    def test_normal_angles(self):
        z = np.tile([0.0, 0.0, 1.0], (3, 3, 1))
        x = np.tile([1.0, 0.0, 0.0], (3, 3, 1))
        assert normal_angle_deg(z, z) == pytest.approx(0.0, abs=1e-6)
        assert normal_angle_deg(x, z) == pytest.approx(90.0)
        assert normal_angle_deg(-z, z) == pytest.approx(180.0)

    def test_normal_no_valid_pixels(self):
        with pytest.raises(DomainError):
            normal_angle_deg(np.zeros((2, 2, 3)), np.zeros((2, 2, 3)))


class TestFrameReport:
    """Test the per-frame metric bundle."""

    def test_identical_frame(self):
        img = np.random.default_rng(4).uniform(size=(16, 16, 3))
        report = evaluate_frame(img, img)
        assert report["psnr"] == 99.0
        assert report["ssim"] == pytest.approx(1.0)
        assert report["depth_rmse"] is None

    def test_ssim_index_float(self):
        img = np.random.default_rng(5).uniform(size=(12, 12))
        assert isinstance(ssim_index(img, img), float)

    def test_masked_frame(self):
        rng = np.random.default_rng(6)
        pred = rng.uniform(size=(16, 16, 3))
        target = pred.copy()
        target[8:] = 1.0 - target[8:]
        depth = np.full((16, 16), 2.0)
        pred_depth = depth.copy()
        pred_depth[8:] += 1.0
        mask = np.zeros((16, 16), dtype=bool)
        mask[:8] = True
        report = evaluate_frame(pred, target, pred_depth, depth, mask=mask)
        assert report["psnr"] == 99.0
        assert report["depth_rmse"] == 0.0
        assert report["ssim"] < 1.0
        assert evaluate_frame(pred, target, mask=None)["psnr"] < 99.0
