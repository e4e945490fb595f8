"""Learnable graph relative positional encodings.

A one-hot table of clipped hop distances seeds a two-layer ReLU network
whose output is split into per-head slices.  Each attention head then turns
its slice into a scalar pre-softmax bias through a learned vector.
"""

from __future__ import annotations

import numpy as np

from .tensor import DimensionError, Tensor, concat, linear, matmul, permute, relu, reshape


def build_gamma0(psi: np.ndarray, d_max: int) -> np.ndarray:
    """One-hot encoding of ``min(psi, d_max + 1)``, shape ``N x N x (d_max + 2)``."""
    psi = np.asarray(psi)
    if psi.ndim != 2 or psi.shape[0] != psi.shape[1]:
        raise DimensionError(f"psi must be square, got shape {psi.shape}")
    if d_max < 0:
        raise ValueError(f"d_max must be >= 0, got {d_max}")
    if (psi < 0).any():
        i, j = np.argwhere(psi < 0)[0]
        raise ValueError(f"negative distance psi[{i}, {j}] = {psi[i, j]}")
    clipped = np.minimum(psi, d_max + 1).astype(np.int64)
    return np.eye(d_max + 2)[clipped]


def init_meta_params(rng, d_max: int, hidden: int, heads: int, d_pos: int) -> dict:
    """Meta-network weights, uniform in +-1/sqrt(fan_in)."""
    onehot = d_max + 2
    out = heads * d_pos
    b1, b2 = 1.0 / np.sqrt(onehot), 1.0 / np.sqrt(hidden)
    return {
        "w1": Tensor(rng.uniform(-b1, b1, (onehot, hidden)), requires_grad=True),
        "b1": Tensor(rng.uniform(-b1, b1, (hidden,)), requires_grad=True),
        "w2": Tensor(rng.uniform(-b2, b2, (hidden, out)), requires_grad=True),
        "b2": Tensor(rng.uniform(-b2, b2, (out,)), requires_grad=True),
    }


def forward_meta(gamma0: Tensor, mlp: dict, heads: int) -> Tensor:
    """``gamma[i, j] = w2 relu(w1 gamma0[i, j] + b1) + b2`` reshaped to ``N x N x A x D_pos``."""
    n = gamma0.shape[0]
    h = relu(linear(gamma0, mlp["w1"], mlp["b1"]))
    out = linear(h, mlp["w2"], mlp["b2"])
    width = out.shape[-1]
    if width % heads:
        raise DimensionError(f"meta-network width {width} not divisible by {heads} heads")
    return reshape(out, (n, n, heads, width // heads))


def positional_bias(gamma: Tensor, vpos: list) -> Tensor:
    """``bias[a, i, j] = vpos[a] . gamma[i, j, a, :]`` as an ``A x N x N`` tensor."""
    n, _, heads, d_pos = gamma.shape
    if len(vpos) != heads:
        raise DimensionError(f"{len(vpos)} positional vectors for {heads} heads")
    for a, v in enumerate(vpos):
        if v.shape != (d_pos,):
            raise DimensionError(f"vpos head {a} has shape {v.shape}, expected ({d_pos},)")
    g = permute(gamma, (2, 0, 1, 3))  # A x N x N x D_pos
    g = reshape(g, (heads, n * n, d_pos))
    v = concat([reshape(t, (1, d_pos, 1)) for t in vpos], axis=0)
    return reshape(matmul(g, v), (heads, n, n))
