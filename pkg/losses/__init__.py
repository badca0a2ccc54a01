"""
Training losses and evaluation metrics.
"""
from losses.losses import (
    LossBreakdown,
    LossWeights,
    expert_losses,
    mse_loss,
    reg_losses,
    ssim,
    total_loss,
    warmup,
)
from losses.metrics import depth_rmse, evaluate_frame, normal_angle_deg, psnr, ssim_index

__all__ = [
    "LossBreakdown",
    "LossWeights",
    "expert_losses",
    "mse_loss",
    "reg_losses",
    "ssim",
    "total_loss",
    "warmup",
    "depth_rmse",
    "evaluate_frame",
    "normal_angle_deg",
    "psnr",
    "ssim_index",
]
