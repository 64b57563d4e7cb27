"""Minimal numpy layer engine: kernels, layers, Adam and initialization."""

from .functional import (
    ConvSpec,
    LayerGradients,
    RunningStats,
    ShapeError,
    activations_and_pools,
    adaptive_avgpool,
    avgpool3s1,
    batchnorm,
    batchnorm_backward,
    batch_statistics,
    conv2d_backward,
    conv2d_forward,
    maxpool3s2,
    mse_loss,
    relu,
    transposed_conv2d,
)
from .init import init_parameters
from .optim import AdamState, adam_step
from .threads import get_threads, set_threads

__all__ = [
    "AdamState",
    "ConvSpec",
    "LayerGradients",
    "RunningStats",
    "ShapeError",
    "activations_and_pools",
    "adam_step",
    "adaptive_avgpool",
    "avgpool3s1",
    "batch_statistics",
    "batchnorm",
    "batchnorm_backward",
    "conv2d_backward",
    "conv2d_forward",
    "get_threads",
    "init_parameters",
    "maxpool3s2",
    "mse_loss",
    "relu",
    "set_threads",
    "transposed_conv2d",
]
