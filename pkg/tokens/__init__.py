"""
Token scheduling: frame subsampling, patch tokens and multi-level chunked attention layouts.
"""
from tokens.attention import LevelCheck, PassthroughReport, token_passthrough_check
from tokens.scheduler import (
    CostReport,
    LevelLayout,
    TokenLayout,
    attention_cost,
    build_layout,
    canonical_ratio,
    densified_tokens,
    patch_grid,
    token_indices,
    window_subsample,
)

__all__ = [
    "LevelCheck",
    "PassthroughReport",
    "token_passthrough_check",
    "CostReport",
    "LevelLayout",
    "TokenLayout",
    "attention_cost",
    "build_layout",
    "canonical_ratio",
    "densified_tokens",
    "patch_grid",
    "token_indices",
    "window_subsample",
]
