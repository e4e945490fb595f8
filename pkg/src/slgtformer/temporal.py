"""Temporal twin attention: windowed local attention, sub-sampled global attention, PEG and downsampling.

All functions here work on the temporal view ``x[B*N, T, D]``.
"""

from __future__ import annotations

import math

import numpy as np

from .attention import init_sublayer, multi_head, residual_pair, sub
from .tensor import DimensionError, Tensor, depthwise_conv1d, reshape, strided_conv1d, take

WINDOWS = 6
PEG_KERNEL = 3


def padded_length(t: int, sub_size: int, windows: int = WINDOWS) -> int:
    """Smallest length >= ``t`` divisible by ``windows``, ``sub_size`` and 2."""
    m = math.lcm(windows, sub_size, 2)
    return -(-t // m) * m


def pad_time(x: Tensor, length: int) -> Tensor:
    """Right-pad axis 1 to ``length`` by repeating the last token."""
    t = x.shape[1]
    if length < t:
        raise DimensionError(f"cannot pad length {t} down to {length}")
    if length == t:
        return x
    idx = np.minimum(np.arange(length), t - 1)
    return take(x, idx, axis=1)


def averaging_kernel(width: int, channels: int) -> np.ndarray:
    """Conv kernel whose output is the channel-wise mean over the window."""
    return np.repeat(np.eye(channels)[None] / width, width, axis=0)


def init_ttsa(rng, d_emb: int, heads: int, d_h: int, mlp_ratio: int, sub_size=None) -> dict:
    """Parameters for an LTA + GSTA pair; ``sub_size=None`` makes the second one plain global attention."""
    p = {f"lta.{k}": v for k, v in init_sublayer(rng, d_emb, heads, d_h, mlp_ratio).items()}
    p.update({f"gsta.{k}": v for k, v in init_sublayer(rng, d_emb, heads, d_h, mlp_ratio).items()})
    if sub_size is not None:
        p["gsta.sub.w"] = Tensor(averaging_kernel(sub_size, d_emb), requires_grad=True)
    return p


def init_peg(d_emb: int) -> dict:
    return {
        "w": Tensor(np.zeros((PEG_KERNEL, d_emb)), requires_grad=True),
        "b": Tensor(np.zeros(d_emb), requires_grad=True),
    }


def lta_forward(x: Tensor, p: dict, heads: int, w: int, ctx=None, name: str = "lta") -> Tensor:
    """Full attention inside disjoint windows of ``w`` consecutive tokens."""
    bn, t, d = x.shape
    if w < 1 or t % w:
        raise DimensionError(f"sequence length {t} is not divisible by window {w}")
    k = t // w

    def attend(h):
        hw = reshape(h, (bn * k, w, d))
        out = multi_head(hw, hw, sub(p, "attn."), heads, ctx=ctx, key=f"{name}.attn")[0]
        return reshape(out, (bn, t, d))

    return residual_pair(x, p, attend, name=name, ctx=ctx)


def gsta_forward(x: Tensor, p: dict, heads: int, sub_size=None, ctx=None, name: str = "gsta") -> Tensor:
    """Every token attends to strided-conv summaries of width/stride ``sub_size``.

    Without a ``sub.w`` kernel in ``p`` this is global self-attention.
    """
    t = x.shape[1]
    kernel = p.get("sub.w")
    if kernel is not None:
        sub_size = kernel.shape[0] if sub_size is None else sub_size
        if kernel.shape[0] != sub_size:
            raise DimensionError(f"summary kernel width {kernel.shape[0]} != sub-sample size {sub_size}")
        if t % sub_size:
            raise DimensionError(f"sequence length {t} is not divisible by sub-sample size {sub_size}")

    def attend(h):
        kv = h if kernel is None else strided_conv1d(h, kernel, sub_size)
        return multi_head(h, kv, sub(p, "attn."), heads, ctx=ctx, key=f"{name}.attn")[0]

    return residual_pair(x, p, attend, name=name, ctx=ctx)


def global_attention(x: Tensor, p: dict, heads: int, ctx=None, name: str = "global") -> Tensor:
    """Unrestricted self-attention sublayer over the whole sequence."""

    def attend(h):
        return multi_head(h, h, sub(p, "attn."), heads, ctx=ctx, key=f"{name}.attn")[0]

    return residual_pair(x, p, attend, name=name, ctx=ctx)


def peg_apply(x: Tensor, p: dict) -> Tensor:
    """``x + depthwise_conv(x)`` with width-3 same padding."""
    return x + depthwise_conv1d(x, p["w"], p["b"])


def ttsa_block(x: Tensor, p: dict, heads: int, w: int, sub_size=None, ctx=None, name: str = "temporal") -> Tensor:
    x = lta_forward(x, sub(p, "lta."), heads, w, ctx=ctx, name=f"{name}.lta")
    return gsta_forward(x, sub(p, "gsta."), heads, sub_size, ctx=ctx, name=f"{name}.gsta")


def stage_downsample(x: Tensor, kernel: Tensor) -> Tensor:
    """Halve the temporal length with a width-2, stride-2 convolution."""
    if x.shape[1] % 2:
        raise DimensionError(f"cannot halve odd length {x.shape[1]}")
    return strided_conv1d(x, kernel, 2)
