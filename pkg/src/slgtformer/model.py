"""Full classifier: input projection, stages of spatial and temporal blocks, pooling and head."""

from __future__ import annotations

import dataclasses
import math
import zlib
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import graph as graphs
from .attention import Context, init_sublayer, layer_scope, sub
from .lgrpe import build_gamma0, forward_meta, init_meta_params, positional_bias
from .spatial import spatial_block
from .temporal import (
    WINDOWS,
    averaging_kernel,
    global_attention,
    init_peg,
    init_ttsa,
    lta_forward,
    pad_time,
    padded_length,
    peg_apply,
    stage_downsample,
    ttsa_block,
)
from .tensor import Rng, Tensor, cross_entropy, linear, mean, permute, reshape, serialize, slice_axis
from .tensor.gradcheck import check_gradients

ABLATIONS = ("lgrpe", "ttsa", "factor")


class ConfigError(ValueError):
    pass


class ShapeMismatchError(serialize.ContainerError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    graph: str = "builtin:slgt27"
    t_in: int = 120
    in_channels: int = 2
    d_emb: int = 64
    heads: int = 4
    d_h: int = 16
    mlp_ratio: int = 4
    stage_blocks: tuple = (1, 1, 2, 1)
    sub_sizes: tuple = (8, 4, 2, 1)
    groups: int = 8
    d_max: int = 0  # 0 selects the graph diameter
    d_pos: int = 16
    h_meta: int = 64
    num_classes: int = 10
    attn_dropout: float = 0.0
    mlp_dropout: float = 0.0
    seed: int = 0
    ablate: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "stage_blocks", tuple(int(v) for v in self.stage_blocks))
        object.__setattr__(self, "sub_sizes", tuple(int(v) for v in self.sub_sizes))
        object.__setattr__(self, "ablate", tuple(sorted(set(self.ablate))))
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.in_channels in (2, 3), f"in_channels must be 2 or 3, got {self.in_channels}")
        for name in ("t_in", "d_emb", "heads", "d_h", "mlp_ratio", "groups", "d_pos", "h_meta"):
            need(int(getattr(self, name)) >= 1, f"{name} must be positive")
        need(self.num_classes >= 2, "num_classes must be >= 2")
        need(self.heads * self.d_h == self.d_emb, f"heads*d_h = {self.heads * self.d_h} must equal d_emb = {self.d_emb}")
        need(self.d_emb % self.groups == 0, f"groups {self.groups} must divide d_emb {self.d_emb}")
        need(len(self.stage_blocks) >= 1, "at least one stage is required")
        need(len(self.stage_blocks) == len(self.sub_sizes), "stage_blocks and sub_sizes differ in length")
        need(all(b >= 1 for b in self.stage_blocks), "every stage needs at least one block")
        need(all(s >= 1 for s in self.sub_sizes), "sub-sample sizes must be positive")
        need(self.d_max >= 0, "d_max must be >= 0")
        for p in (self.attn_dropout, self.mlp_dropout):
            need(0.0 <= p < 1.0, f"dropout rate {p} outside [0, 1)")
        need(0 <= self.seed < 2**64, "seed must fit in 64 bits")
        unknown = set(self.ablate) - set(ABLATIONS)
        need(not unknown, f"unknown ablation(s) {sorted(unknown)}; choose from {list(ABLATIONS)}")
        self.skeleton  # parses and validates the graph

    @cached_property
    def skeleton(self) -> graphs.SkeletonGraph:
        kind, _, arg = self.graph.partition(":")
        try:
            if kind == "builtin" and arg == "slgt27":
                return graphs.builtin_slgt27()
            if kind == "path":
                return graphs.path_graph(int(arg))
            if kind == "file":
                return graphs.load_graph(arg)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot build graph {self.graph!r}: {exc}") from exc
        raise ConfigError(f"unknown graph spec {self.graph!r}; use builtin:slgt27, path:<n> or file:<path>")

    @property
    def n_joints(self) -> int:
        return self.skeleton.node_count

    @cached_property
    def psi(self) -> np.ndarray:
        return graphs.shortest_path_matrix(self.skeleton)

    @property
    def effective_d_max(self) -> int:
        return self.d_max if self.d_max > 0 else int(self.psi.max())

    def stage_lengths(self) -> list:
        """``(padded_length, window)`` per stage for input length ``t_in``."""
        out, t = [], self.t_in
        for s, sub_size in enumerate(self.sub_sizes):
            tp = padded_length(t, sub_size)
            out.append((tp, tp // WINDOWS))
            t = tp // 2
        return out

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["stage_blocks"] = list(self.stage_blocks)
        d["sub_sizes"] = list(self.sub_sizes)
        d["ablate"] = list(self.ablate)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown model config key(s): {sorted(unknown)}")
        return cls(**d)

    def with_ablations(self, ablate) -> "ModelConfig":
        return dataclasses.replace(self, ablate=tuple(set(self.ablate) | set(ablate)))


def tiny_config(**overrides) -> ModelConfig:
    """Three-joint path graph, 12 frames, width 8, one stage; small enough for full gradient checks."""
    kw = dict(
        graph="path:3", t_in=12, d_emb=8, heads=2, d_h=4, mlp_ratio=2, stage_blocks=(1,), sub_sizes=(2,),
        groups=2, d_pos=2, h_meta=4, num_classes=3,
    )
    kw.update(overrides)
    return ModelConfig(**kw)


# ---------------------------------------------------------------- parameters


def _stream(cfg: ModelConfig, name: str) -> Rng:
    return Rng(cfg.seed, zlib.crc32(name.encode()))


def init_params(cfg: ModelConfig) -> dict:
    """All learnable tensors keyed by dotted name.  Each group draws from its own named stream."""
    d, heads = cfg.d_emb, cfg.heads
    params = {}

    def put(prefix, group):
        for k, v in group.items():
            v.name = f"{prefix}.{k}"
            params[v.name] = v

    r = _stream(cfg, "input")
    bound = 1.0 / math.sqrt(cfg.in_channels)
    put("input", {
        "w": Tensor(r.uniform(-bound, bound, (cfg.in_channels, d)), requires_grad=True),
        "b": Tensor(np.zeros(d), requires_grad=True),
    })
    use_lgrpe = "lgrpe" not in cfg.ablate
    if use_lgrpe:
        d_max = cfg.effective_d_max
        gamma0 = Tensor(build_gamma0(cfg.psi, d_max), requires_grad=True)
        put("lgrpe", {"gamma0": gamma0})
        mlp = init_meta_params(_stream(cfg, "lgrpe.mlp"), d_max, cfg.h_meta, heads, cfg.d_pos)
        put("lgrpe.mlp", mlp)
    factor = graphs.normalized_adjacency_factor(cfg.skeleton)
    b = 0
    for s, (blocks, sub_size) in enumerate(zip(cfg.stage_blocks, cfg.sub_sizes)):
        for _ in range(blocks):
            pre = f"block{b}"
            sp = init_sublayer(_stream(cfg, f"{pre}.spatial"), d, heads, cfg.d_h, cfg.mlp_ratio)
            if "factor" not in cfg.ablate:
                sp["factor"] = graphs.init_decoupled_factor(factor, cfg.groups)
            if use_lgrpe:
                for a in range(heads):
                    sp[f"vpos.head{a}"] = Tensor(np.zeros(cfg.d_pos), requires_grad=True)
            put(f"{pre}.spatial", sp)
            gsta_sub = None if "ttsa" in cfg.ablate else sub_size
            put(f"{pre}.temporal", init_ttsa(_stream(cfg, f"{pre}.temporal"), d, heads, cfg.d_h, cfg.mlp_ratio, gsta_sub))
            b += 1
        put(f"stage{s}.peg", init_peg(d))
        if s < len(cfg.stage_blocks) - 1:
            put(f"stage{s}.down", {"w": Tensor(averaging_kernel(2, d), requires_grad=True)})
    r = _stream(cfg, "head")
    bound = 1.0 / math.sqrt(d)
    put("head", {
        "w": Tensor(r.uniform(-bound, bound, (d, cfg.num_classes)), requires_grad=True),
        "b": Tensor(np.zeros(cfg.num_classes), requires_grad=True),
    })
    return params


def param_shapes(cfg: ModelConfig) -> dict:
    return {k: v.shape for k, v in init_params(cfg).items()}


def count_params(cfg: ModelConfig) -> int:
    return int(sum(np.prod(s) for s in param_shapes(cfg).values()))


# ---------------------------------------------------------------- forward


def project_input(x0: Tensor, p: dict, in_channels: int) -> Tensor:
    """``B x N x C x T`` keypoints to ``B x T x N x D`` embeddings."""
    if x0.ndim != 4 or x0.shape[2] != in_channels:
        raise ConfigError(f"input must be B x N x {in_channels} x T, got {x0.shape}")
    return linear(permute(x0, (0, 3, 1, 2)), p["input.w"], p["input.b"])


def _to_temporal(x: Tensor) -> Tensor:
    b, t, n, d = x.shape
    return reshape(permute(x, (0, 2, 1, 3)), (b * n, t, d))


def _from_temporal(x: Tensor, b: int, n: int) -> Tensor:
    _, t, d = x.shape
    return permute(reshape(x, (b, n, t, d)), (0, 2, 1, 3))


def forward(cfg: ModelConfig, params: dict, x0, ctx: Context | None = None) -> Tensor:
    """Logits ``B x num_classes`` for keypoints ``x0[B, N, C, T]``."""
    ctx = ctx or Context()
    x0 = x0 if isinstance(x0, Tensor) else Tensor(x0)
    if x0.ndim != 4 or x0.shape[1] != cfg.n_joints or x0.shape[3] != cfg.t_in:
        raise ConfigError(f"input must be B x {cfg.n_joints} x {cfg.in_channels} x {cfg.t_in}, got {x0.shape}")
    with layer_scope("input"):
        x = project_input(x0, params, cfg.in_channels)
    bsz, valid, n, d = x.shape
    heads = cfg.heads
    gamma = None
    if "lgrpe" not in cfg.ablate:
        with layer_scope("lgrpe"):
            gamma = forward_meta(params["lgrpe.gamma0"], sub(params, "lgrpe.mlp."), heads)
    b = 0
    n_stages = len(cfg.stage_blocks)
    for s, (blocks, sub_size) in enumerate(zip(cfg.stage_blocks, cfg.sub_sizes)):
        t_pad = padded_length(x.shape[1], sub_size)
        x = pad_time(x, t_pad)
        w = t_pad // WINDOWS
        for j in range(blocks):
            pre = f"block{b}"
            sp = sub(params, f"{pre}.spatial.")
            bias = None
            if gamma is not None:
                with layer_scope(f"{pre}.spatial.lgrpe"):
                    bias = positional_bias(gamma, [sp[f"vpos.head{a}"] for a in range(heads)])
            xs = reshape(x, (bsz * t_pad, n, d))
            xs = spatial_block(xs, sp, heads, bias=bias, factor=sp.get("factor"), ctx=ctx, name=f"{pre}.spatial")
            xt = _to_temporal(reshape(xs, (bsz, t_pad, n, d)))
            tp = sub(params, f"{pre}.temporal.")
            if "ttsa" in cfg.ablate:
                xt = lta_forward(xt, sub(tp, "lta."), heads, t_pad, ctx=ctx, name=f"{pre}.temporal.lta")
                xt = global_attention(xt, sub(tp, "gsta."), heads, ctx=ctx, name=f"{pre}.temporal.gsta")
            else:
                xt = ttsa_block(xt, tp, heads, w, sub_size, ctx=ctx, name=f"{pre}.temporal")
            if j == 0:
                with layer_scope(f"stage{s}.peg"):
                    xt = peg_apply(xt, sub(params, f"stage{s}.peg."))
            x = _from_temporal(xt, bsz, n)
            b += 1
        if s < n_stages - 1:
            with layer_scope(f"stage{s}.down"):
                xt = stage_downsample(_to_temporal(x), params[f"stage{s}.down.w"])
            x = _from_temporal(xt, bsz, n)
            valid = -(-valid // 2)
    with layer_scope("head"):
        pooled = mean(reshape(slice_axis(x, 1, 0, valid), (bsz, valid * n, d)), axis=1)
        return linear(pooled, params["head.w"], params["head.b"])


def gradient_suite(cfg: ModelConfig, seed: int = 0, batch: int = 2, noise: float = 0.1):
    """Finite-difference check of every parameter on a random batch.

    Parameters are jittered away from their initial values first, so that
    zero-initialised pieces (PEG, biases) carry non-trivial gradients.
    """
    params = init_params(cfg)
    rng = Rng(seed, 0x6C4E)
    for name in sorted(params):
        params[name].data += noise * rng.spawn(zlib.crc32(name.encode())).normal(0.0, 1.0, params[name].shape)
    x = rng.uniform(-2.0, 2.0, (batch, cfg.n_joints, cfg.in_channels, cfg.t_in))
    labels = rng.integers(0, cfg.num_classes, batch)
    return check_gradients(lambda: cross_entropy(forward(cfg, params, x), labels), params)


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path, cfg: ModelConfig, params: dict, extra: dict | None = None, meta: dict | None = None):
    """Parameters plus optional extra arrays (optimizer state) in one container."""
    arrays = {f"param/{k}": v.data for k, v in params.items()}
    for k, v in (extra or {}).items():
        arrays[f"extra/{k}"] = np.asarray(v, dtype=np.float64)
    full_meta = {"kind": "slgtformer-checkpoint", "model": cfg.to_dict()}
    full_meta.update(meta or {})
    serialize.save(path, arrays, full_meta)


def load_checkpoint(path, cfg: ModelConfig | None = None):
    """Returns ``(cfg, params, extra, meta)``; the stored shape map must match ``cfg``."""
    arrays, meta = serialize.load(Path(path))
    if meta.get("kind") != "slgtformer-checkpoint" or "model" not in meta:
        raise serialize.ContainerError("container is not a model checkpoint")
    stored_cfg = ModelConfig.from_dict(meta["model"])
    cfg = cfg or stored_cfg
    expected = param_shapes(cfg)
    stored = {k[6:]: v for k, v in arrays.items() if k.startswith("param/")}
    missing = sorted(set(expected) - set(stored))
    orphans = sorted(set(stored) - set(expected))
    if missing or orphans:
        raise ShapeMismatchError(f"parameter names differ from config: missing {missing[:5]}, unexpected {orphans[:5]}")
    for k, shape in expected.items():
        if stored[k].shape != shape:
            raise ShapeMismatchError(f"{k}: stored shape {stored[k].shape} != expected {shape}")
    params = {}
    for k, v in stored.items():
        params[k] = Tensor(v, requires_grad=True, name=k)
    extra = {k[6:]: v for k, v in arrays.items() if k.startswith("extra/")}
    return cfg, params, extra, meta
