"""
Per-scene fitting: parameterisation, gradients and the optimiser loop.
"""
from fitting.params import ParamVector, decode_params, decode_tensors, encode_params
from fitting.trainer import (
    FitConfig,
    FitResult,
    evaluate_loss,
    finite_diff_grad,
    fit,
    loss_and_grad,
    synthesize_frames,
)

__all__ = [
    "ParamVector",
    "decode_params",
    "decode_tensors",
    "encode_params",
    "FitConfig",
    "FitResult",
    "evaluate_loss",
    "finite_diff_grad",
    "fit",
    "loss_and_grad",
    "synthesize_frames",
]
