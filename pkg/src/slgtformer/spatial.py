"""Spatial block: attention across the joints of each frame, then the grouped graph factor."""

from __future__ import annotations

from .attention import multi_head, residual_pair, sub
from .tensor import DimensionError, Tensor, matmul, permute, reshape


def psa_forward(x: Tensor, p: dict, heads: int, bias=None, ctx=None, name: str = "spatial") -> Tensor:
    """Positional self-attention sublayer on ``x[B*T, N, D]``.

    ``bias`` is the ``A x N x N`` positional term added to the logits; None
    gives plain self-attention.
    """
    if bias is not None and bias.shape != (heads, x.shape[1], x.shape[1]):
        raise DimensionError(f"positional bias {bias.shape} does not match {heads} heads over {x.shape[1]} joints")

    def attend(h):
        return multi_head(h, h, sub(p, "attn."), heads, bias=bias, ctx=ctx, key=f"{name}.attn")[0]

    return residual_pair(x, p, attend, name=name, ctx=ctx)


def apply_decoupled_factor(x: Tensor, factor: Tensor) -> Tensor:
    """Group ``k`` of the channels is mixed across joints by ``factor[:, :, k]``.

    ``x`` is ``[B*T, N, D]`` and ``factor`` is ``N x N x g`` with ``g | D``.
    """
    bt, n, d = x.shape
    if factor.ndim != 3 or factor.shape[:2] != (n, n):
        raise DimensionError(f"factor {factor.shape} does not match {n} joints")
    g = factor.shape[2]
    if d % g:
        raise DimensionError(f"{g} factor groups do not divide width {d}")
    xs = permute(reshape(x, (bt, n, g, d // g)), (0, 2, 1, 3))  # BT x g x N x c
    mixed = matmul(permute(factor, (2, 0, 1)), xs)
    return reshape(permute(mixed, (0, 2, 1, 3)), (bt, n, d))


def spatial_block(x: Tensor, p: dict, heads: int, bias=None, factor=None, ctx=None, name: str = "spatial") -> Tensor:
    """PSA then the post-attention factor; ``factor=None`` means identity."""
    out = psa_forward(x, p, heads, bias=bias, ctx=ctx, name=name)
    if factor is not None:
        out = apply_decoupled_factor(out, factor)
    return out
