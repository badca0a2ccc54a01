"""
Density control: patch activation statistics, channel pruning and densification budgets.
"""
from density.control import (
    ActivationHistogram,
    DensifyPlan,
    PatchOpacityGrid,
    PruningReport,
    activation_mask,
    aggregate_histogram,
    apply_pruning,
    compare_pruning_strategies,
    densify_plan,
    load_channels,
    patch_stats,
    patchify_opacity,
    save_channels,
    select_channels,
    top_opacity_channels,
)

__all__ = [
    "ActivationHistogram",
    "DensifyPlan",
    "PatchOpacityGrid",
    "PruningReport",
    "activation_mask",
    "aggregate_histogram",
    "apply_pruning",
    "compare_pruning_strategies",
    "densify_plan",
    "load_channels",
    "patch_stats",
    "patchify_opacity",
    "save_channels",
    "select_channels",
    "top_opacity_channels",
]
