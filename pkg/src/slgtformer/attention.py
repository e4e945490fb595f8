"""Multi-head attention and the pre-norm residual sublayer shared by every block."""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tensor import (
    DimensionError,
    NonFiniteError,
    Tensor,
    add,
    dropout,
    gelu,
    layer_norm,
    linear,
    matmul,
    permute,
    reshape,
    softmax,
)


@dataclass
class Context:
    """Per-call switches threaded through the forward pass."""

    train: bool = False
    rng: Optional[object] = None
    attn_dropout: float = 0.0
    mlp_dropout: float = 0.0
    trace: Optional[dict] = None
    _calls: int = field(default=0, repr=False)

    def drop(self, x: Tensor, p: float) -> Tensor:
        if not self.train or p == 0.0:
            return x
        self._calls += 1
        return dropout(x, p, self.rng.spawn(self._calls), train=True)


def _uniform(rng, fan_in, shape):
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)


def init_attention(rng, d_emb: int, heads: int, d_h: int) -> dict:
    """Q/K/V projections stored fused as ``D_emb x (A*D_h)``, head ``a`` in columns ``a*D_h:(a+1)*D_h``."""
    inner = heads * d_h
    return {
        "wq": _uniform(rng, d_emb, (d_emb, inner)),
        "wk": _uniform(rng, d_emb, (d_emb, inner)),
        "wv": _uniform(rng, d_emb, (d_emb, inner)),
        "wo": _uniform(rng, inner, (inner, d_emb)),
    }


def init_sublayer(rng, d_emb: int, heads: int, d_h: int, mlp_ratio: int) -> dict:
    hidden = mlp_ratio * d_emb
    p = {
        "ln1.g": Tensor(np.ones(d_emb), requires_grad=True),
        "ln1.b": Tensor(np.zeros(d_emb), requires_grad=True),
        "ln2.g": Tensor(np.ones(d_emb), requires_grad=True),
        "ln2.b": Tensor(np.zeros(d_emb), requires_grad=True),
        "mlp.w1": _uniform(rng, d_emb, (d_emb, hidden)),
        "mlp.b1": Tensor(np.zeros(hidden), requires_grad=True),
        "mlp.w2": _uniform(rng, hidden, (hidden, d_emb)),
        "mlp.b2": Tensor(np.zeros(d_emb), requires_grad=True),
    }
    p.update({f"attn.{k}": v for k, v in init_attention(rng, d_emb, heads, d_h).items()})
    return p


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, t, inner = x.shape
    return permute(reshape(x, (b, t, heads, inner // heads)), (0, 2, 1, 3))


def multi_head(xq: Tensor, xkv: Tensor, p: dict, heads: int, bias=None, mask=None, ctx=None, key=None):
    """Attention of ``xq[B, Tq, D]`` over ``xkv[B, Tk, D]``.

    ``bias`` broadcasts against the ``B x A x Tq x Tk`` logits; ``mask`` is
    boolean with True marking admissible keys.  Returns the projected output
    and the attention weights.
    """
    if xq.ndim != 3 or xkv.ndim != 3 or xq.shape[0] != xkv.shape[0]:
        raise DimensionError(f"attention inputs must be [B, T, D] with equal B, got {xq.shape} and {xkv.shape}")
    inner = p["wq"].shape[1]
    if inner % heads:
        raise DimensionError(f"projection width {inner} not divisible by {heads} heads")
    d_h = inner // heads
    q = _split_heads(linear(xq, p["wq"]), heads)
    k = _split_heads(linear(xkv, p["wk"]), heads)
    v = _split_heads(linear(xkv, p["wv"]), heads)
    logits = matmul(q, permute(k, (0, 1, 3, 2))) / math.sqrt(d_h)
    if bias is not None:
        logits = add(logits, bias)
    alpha = softmax(logits, axis=-1, mask=mask)
    if ctx is not None and ctx.trace is not None and key is not None:
        ctx.trace[key] = alpha.data.copy()
    if ctx is not None:
        alpha = ctx.drop(alpha, ctx.attn_dropout)
    s = permute(matmul(alpha, v), (0, 2, 1, 3))
    b, tq = xq.shape[:2]
    return linear(reshape(s, (b, tq, inner)), p["wo"]), alpha


def sub(params: dict, prefix: str) -> dict:
    """View of the entries under ``prefix`` with the prefix stripped."""
    n = len(prefix)
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix)}


def mlp(x: Tensor, p: dict, ctx=None) -> Tensor:
    h = gelu(linear(x, p["mlp.w1"], p["mlp.b1"]))
    if ctx is not None:
        h = ctx.drop(h, ctx.mlp_dropout)
    return linear(h, p["mlp.w2"], p["mlp.b2"])


def residual_pair(x: Tensor, p: dict, attend, name: str = "sublayer", ctx=None) -> Tensor:
    """``x + attend(LN1 x)`` followed by ``+ MLP(LN2 .)``.

    ``attend`` maps the normalised input to the attention output.  A
    non-finite value anywhere inside is re-raised tagged with ``name``.
    """
    with layer_scope(name):
        h = x + attend(layer_norm(x, p["ln1.g"], p["ln1.b"]))
        return h + mlp(layer_norm(h, p["ln2.g"], p["ln2.b"]), p, ctx)


@contextmanager
def layer_scope(name: str):
    try:
        yield
    except NonFiniteError as exc:
        if str(exc).startswith("in layer "):
            raise
        raise NonFiniteError(f"in layer {name}: {exc}") from exc
