"""
Unit tests for token layouts, attention cost accounting and the passthrough check.
"""
from dataclasses import replace
from fractions import Fraction

import math

import numpy as np
import pytest
import torch

from model.camera import CameraIntrinsics
from tokens.attention import _attend, token_passthrough_check
from tokens.scheduler import (
    attention_cost,
    build_layout,
    canonical_ratio,
    densified_tokens,
    patch_grid,
    token_indices,
    window_subsample,
)
from utils.errors import DomainError


# ============================================================================
# Frame and Patch Counting
# ============================================================================

class TestCounting:
    """Test window subsampling and patch grids."""

    def test_stage_one_inputs(self):
        assert window_subsample(128, 8) == list(range(0, 128, 8))
        assert len(window_subsample(128, 8)) == 16

    def test_stage_two_inputs(self):
        assert len(window_subsample(128, 2)) == 64

    def test_stride_one_is_identity(self):
        assert window_subsample(10, 1) == list(range(10))

    @pytest.mark.parametrize("W,stride", [(10, 3), (7, 7), (129, 8)])
    def test_length_and_bounds(self, W, stride):
        idx = window_subsample(W, stride)
        assert len(idx) == math.ceil(W / stride)
        assert max(idx) < W

    def test_invalid_stride(self):
        with pytest.raises(DomainError):
            window_subsample(4, 8)
        with pytest.raises(DomainError):
            window_subsample(4, 0)

    @pytest.mark.parametrize("w,h,expected", [(504, 504, 1296), (14, 14, 1), (14, 28, 2)])
    def test_patch_grid(self, w, h, expected):
        assert patch_grid(CameraIntrinsics.centered(w, h, focal=100.0), 14) == expected

    def test_patch_grid_padding_hint(self):
        with pytest.raises(DomainError, match="pad to 28x14"):
            patch_grid(CameraIntrinsics.centered(20, 14, focal=10.0), 14)


# ============================================================================
# Layouts and Cost
# ============================================================================

class TestLayout:
    """Test the multi-level chunk layout."""

    def test_canonical_layout(self):
        layout = build_layout(64, 4, 3, 1296)
        shapes = [(lv.chunk_count, lv.frames_per_chunk, lv.tokens_per_frame) for lv in layout.levels]
        assert shapes == [(4, 16, 1296), (2, 32, 648), (1, 64, 324)]
        assert all(lv.tokens_per_chunk == 20736 for lv in layout.levels)
        assert all(lv.sequence_length == 20737 for lv in layout.levels)
        assert layout.total_tokens == 64 * 1296

    def test_single_level(self):
        layout = build_layout(8, 4, 1, 10)
        assert len(layout.levels) == 1
        assert layout.levels[0].chunk_count == 4
        assert layout.levels[0].tokens_per_frame == 10

    def test_one_frame_per_chunk(self):
        layout = build_layout(5, 5, 1, 7)
        assert layout.levels[0].chunk_count == 5
        assert layout.levels[0].tokens_per_chunk == 7

    @pytest.mark.parametrize("args", [(64, 5, 1, 16), (64, 4, 4, 1296), (64, 4, 3, 1297)])
    def test_divisibility_errors(self, args):
        with pytest.raises(DomainError):
            build_layout(*args)

    @pytest.mark.parametrize("M,L,ratio", [(4, 3, Fraction(7, 16)), (1, 1, Fraction(1)), (2, 2, Fraction(3, 4))])
    def test_cost_ratio(self, M, L, ratio):
        layout = build_layout(M * 4, M, L, 16)
        report = attention_cost(layout)
        assert report.ratio == ratio
        assert report.ratio == canonical_ratio(M, L)

    def test_canonical_ratio_value(self):
        assert float(attention_cost(build_layout(64, 4, 3, 1296)).ratio) == 0.4375

    def test_densified_tokens(self):
        assert densified_tokens(1296, 64, 2, 4) == 1296 * 64 * 16


class TestTokenIndices:
    """Test the strided token subsets."""

    def test_level_zero_keeps_all(self):
        assert np.array_equal(token_indices(0, 3, 4), np.arange(12))

    def test_alternating_halving(self):
        level1 = token_indices(1, 4, 4)
        assert np.array_equal(level1, [0, 1, 2, 3, 8, 9, 10, 11])
        level2 = token_indices(2, 4, 4)
        assert np.array_equal(level2, [0, 2, 8, 10])

    def test_canonical_counts(self):
        assert [len(token_indices(level, 36, 36)) for level in range(3)] == [1296, 648, 324]

    def test_unhalvable_grid(self):
        with pytest.raises(DomainError):
            token_indices(1, 3, 4)


# ============================================================================
# Passthrough
# ============================================================================

class TestPassthrough:
    """Test attention shape preservation and pair counting."""

    def test_shapes_and_pairs(self):
        layout = build_layout(8, 4, 3, 16)
        report = token_passthrough_check(layout, token_dim=8)
        assert report.ok
        for check in report.levels:
            assert check.input_shape == check.output_shape
            assert check.input_shape[1] == 33
        assert report.measured_total == attention_cost(layout).total

    def test_single_token_chunk(self):
        report = token_passthrough_check(build_layout(1, 1, 1, 1), token_dim=4)
        assert report.levels[0].measured_pairs == 1

    def test_non_square_frames(self):
        layout = build_layout(4, 2, 2, 6)
        report = token_passthrough_check(layout, token_dim=3, grid=(2, 3))
        assert report.ok

    def test_several_classification_tokens(self):
        layout = build_layout(4, 2, 2, 4)
        layout = replace(layout, levels=[replace(lv, cls_tokens=3) for lv in layout.levels])
        report = token_passthrough_check(layout, token_dim=4)
        assert report.ok
        for check, lv in zip(report.levels, layout.levels):
            assert check.input_shape[1] == lv.tokens_per_chunk + 3
        assert report.measured_total == attention_cost(layout).total

    def test_chunks_do_not_attend_each_other(self):
        x = torch.randn(2, 3, 2, generator=torch.Generator().manual_seed(1))
        eye = torch.eye(2)
        out, pairs = _attend(x, eye, eye, eye, cls_tokens=1)
        assert pairs == 2 * 2 * 2

        changed = x.clone()
        changed[1] += 5.0
        out_changed, _ = _attend(changed, eye, eye, eye, cls_tokens=1)
        assert torch.allclose(out[0], out_changed[0])
        assert not torch.allclose(out[1], out_changed[1])

    def test_pairs_follow_classification_count(self):
        x = torch.zeros(3, 5, 2)
        eye = torch.eye(2)
        assert _attend(x, eye, eye, eye, cls_tokens=0)[1] == 3 * 5 * 5
        assert _attend(x, eye, eye, eye, cls_tokens=2)[1] == 3 * 3 * 3

    @pytest.mark.slow
    def test_full_window_pairs(self):
        """Blocked attention over the full 64-frame layout scores exactly the predicted pairs."""
        layout = build_layout(64, 4, 3, 1296)
        report = token_passthrough_check(layout, token_dim=2)
        assert report.ok
        assert Fraction(report.measured_total, layout.total_tokens ** 2) == Fraction(7, 16)

    def test_invalid_dim(self):
        with pytest.raises(DomainError):
            token_passthrough_check(build_layout(2, 1, 1, 2), token_dim=0)
