"""Minimal float64 tensor library with reverse-mode autodiff."""

from . import kernels, ops
from .core import (
    DegenerateInputError,
    DimensionError,
    NonFiniteError,
    Tape,
    Tensor,
    as_tensor,
    backward,
    get_tape,
    is_grad_enabled,
    no_grad,
)
from .ops import (
    add,
    concat,
    cross_entropy,
    depthwise_conv1d,
    div,
    dropout,
    embedding_lookup,
    gelu,
    layer_norm,
    linear,
    log_softmax,
    matmul,
    mean,
    mul,
    permute,
    relu,
    reshape,
    softmax,
    strided_conv1d,
    sub,
    take,
)
from .ops import slice as slice_axis
from .ops import sum as sum_axis
from .rng import Rng

__all__ = [
    "DegenerateInputError",
    "DimensionError",
    "NonFiniteError",
    "Rng",
    "Tape",
    "Tensor",
    "add",
    "as_tensor",
    "backward",
    "concat",
    "cross_entropy",
    "depthwise_conv1d",
    "div",
    "dropout",
    "embedding_lookup",
    "gelu",
    "get_tape",
    "is_grad_enabled",
    "kernels",
    "layer_norm",
    "linear",
    "log_softmax",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "ops",
    "permute",
    "relu",
    "reshape",
    "slice_axis",
    "softmax",
    "strided_conv1d",
    "sub",
    "sum_axis",
    "take",
]
