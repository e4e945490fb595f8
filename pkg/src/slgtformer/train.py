"""Optimisers, schedules, the resumable training loop and top-k evaluation."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attention import Context
from .data import AugmentConfig, KeypointDataset
from .model import ModelConfig, forward, init_params, load_checkpoint, save_checkpoint
from .tensor import NonFiniteError, Rng, backward, cross_entropy, no_grad

# Stream tags keeping data order, dropout and augmentation draws independent.
ORDER_STREAM = 0x5EED
DROPOUT_STREAM = 0xD207


class TrainingError(RuntimeError):
    pass


class NumericFailure(TrainingError):
    """Loss or gradient became non-finite; carries the offending batch."""

    def __init__(self, msg, epoch=None, step=None, batch=None):
        super().__init__(msg)
        self.epoch, self.step, self.batch = epoch, step, batch


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 3e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 8
    epochs: int = 50
    schedule: str = "cosine"
    warmup_steps: int = 0
    step_size: int = 10
    step_gamma: float = 0.1
    min_lr: float = 0.0
    label_smoothing: float = 0.1
    clip_grad_norm: float = 0.0
    seed: int = 0
    stop_train_top1: float = 0.0  # stop once an epoch's train top-1 reaches this (0 disables)
    eval_split: str = "test"
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if isinstance(self.augment, dict):
            object.__setattr__(self, "augment", AugmentConfig(**self.augment))
        if self.optimizer not in ("adam", "sgd-momentum"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd-momentum', got {self.optimizer!r}")
        if self.schedule not in ("cosine", "step", "constant"):
            raise ValueError(f"schedule must be 'cosine', 'step' or 'constant', got {self.schedule!r}")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if not all(0.0 <= b < 1.0 for b in self.betas) or len(self.betas) != 2:
            raise ValueError("betas must be two values in [0, 1)")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.step_size < 1 or not 0 < self.step_gamma <= 1:
            raise ValueError("step schedule needs step_size >= 1 and 0 < step_gamma <= 1")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError("label_smoothing must be in [0, 1)")
        if self.weight_decay < 0 or self.clip_grad_norm < 0 or self.warmup_steps < 0 or self.min_lr < 0:
            raise ValueError("weight_decay, clip_grad_norm, warmup_steps and min_lr must be >= 0")


# ---------------------------------------------------------------- optimisers


def learning_rate(cfg: TrainConfig, step: int, total_steps: int) -> float:
    if cfg.warmup_steps and step < cfg.warmup_steps:
        return cfg.lr * (step + 1) / cfg.warmup_steps
    if cfg.schedule == "constant":
        return cfg.lr
    if cfg.schedule == "step":
        return cfg.lr * cfg.step_gamma ** (step // cfg.step_size)
    span = max(total_steps - cfg.warmup_steps, 1)
    frac = min(max(step - cfg.warmup_steps, 0) / span, 1.0)
    return cfg.min_lr + 0.5 * (cfg.lr - cfg.min_lr) * (1.0 + math.cos(math.pi * frac))


class Adam:
    def __init__(self, params: dict, cfg: TrainConfig):
        self.params, self.cfg = params, cfg
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.t = 0

    def step(self, lr: float):
        b1, b2 = self.cfg.betas
        self.t += 1
        c1, c2 = 1.0 - b1**self.t, 1.0 - b2**self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if self.cfg.weight_decay:
                g = g + self.cfg.weight_decay * p.data
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            p.data -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.cfg.eps)

    def state(self) -> dict:
        out = {f"adam.m.{k}": v for k, v in self.m.items()}
        out.update({f"adam.v.{k}": v for k, v in self.v.items()})
        out["adam.t"] = np.array([float(self.t)])
        return out

    def load(self, state: dict):
        for k in self.params:
            self.m[k] = state[f"adam.m.{k}"].copy()
            self.v[k] = state[f"adam.v.{k}"].copy()
        self.t = int(state["adam.t"][0])


class SgdMomentum:
    def __init__(self, params: dict, cfg: TrainConfig):
        self.params, self.cfg = params, cfg
        self.buf = {k: np.zeros_like(v.data) for k, v in params.items()}

    def step(self, lr: float):
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if self.cfg.weight_decay:
                g = g + self.cfg.weight_decay * p.data
            self.buf[k] = self.cfg.momentum * self.buf[k] + g
            p.data -= lr * self.buf[k]

    def state(self) -> dict:
        return {f"sgd.buf.{k}": v for k, v in self.buf.items()}

    def load(self, state: dict):
        for k in self.params:
            self.buf[k] = state[f"sgd.buf.{k}"].copy()


def make_optimizer(params: dict, cfg: TrainConfig):
    return Adam(params, cfg) if cfg.optimizer == "adam" else SgdMomentum(params, cfg)


def clip_gradients(params: dict, max_norm: float) -> float:
    norm = math.sqrt(sum(float((p.grad * p.grad).sum()) for p in params.values() if p.grad is not None))
    if max_norm and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


# ---------------------------------------------------------------- evaluation


def topk_hits(logits: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Whether each label is among the ``k`` highest logits; ties rank the lower class id first."""
    order = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    return (order == np.asarray(labels)[:, None]).any(axis=1)


def predict(cfg: ModelConfig, params: dict, x: np.ndarray, batch_size: int = 16) -> np.ndarray:
    out = []
    with no_grad():
        for i in range(0, len(x), batch_size):
            out.append(forward(cfg, params, x[i : i + batch_size]).data)
    return np.concatenate(out) if out else np.zeros((0, cfg.num_classes))


def evaluate(cfg: ModelConfig, params: dict, ds: KeypointDataset, idx, batch_size: int = 16) -> dict:
    if ds.num_classes != cfg.num_classes:
        raise TrainingError(f"dataset has {ds.num_classes} classes, model has {cfg.num_classes}")
    idx = np.asarray(idx)
    if idx.size == 0:
        return {"top1": float("nan"), "top5": float("nan"), "count": 0}
    x, y = ds.batch(idx, train=False)
    logits = predict(cfg, params, x, batch_size)
    k5 = min(5, cfg.num_classes)
    return {
        "top1": float(topk_hits(logits, y, 1).mean()),
        "top5": float(topk_hits(logits, y, k5).mean()),
        "count": int(idx.size),
    }


# ---------------------------------------------------------------- training loop


@dataclass
class TrainResult:
    params: dict
    history: list
    best_eval_top1: float
    epochs_run: int
    step: int
    stopped_early: bool


def _train_cfg_dict(cfg: TrainConfig) -> dict:
    d = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__ if k != "augment"}
    d["betas"] = list(cfg.betas)
    a = cfg.augment
    d["augment"] = {k: getattr(a, k) for k in a.__dataclass_fields__}
    d["augment"]["scale_range"] = list(a.scale_range)
    return d


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, ds: KeypointDataset, out_dir, resume: bool = False,
          log=None, max_epochs: int | None = None) -> TrainResult:
    """Minibatch training with per-epoch metrics, ``last.ckpt`` and ``best.ckpt`` in ``out_dir``.

    Data order, augmentation and dropout randomness are all derived from
    ``(seed, epoch, ...)`` so a resumed run is bit-identical to an
    uninterrupted one.  ``max_epochs`` bounds how many epochs this call runs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.jsonl"
    last_path, best_path = out / "last.ckpt", out / "best.ckpt"
    if ds.num_classes != model_cfg.num_classes:
        raise TrainingError(f"dataset has {ds.num_classes} classes, model has {model_cfg.num_classes}")
    train_idx = ds.indices("train")
    eval_idx = ds.indices(train_cfg.eval_split)
    if train_idx.size == 0:
        raise TrainingError("dataset has no training samples")
    steps_per_epoch = -(-train_idx.size // train_cfg.batch_size)
    total_steps = steps_per_epoch * train_cfg.epochs

    params = init_params(model_cfg)
    opt = make_optimizer(params, train_cfg)
    start_epoch, step, best, history, done = 0, 0, -1.0, [], False
    if resume and last_path.exists():
        _, params, extra, meta = load_checkpoint(last_path, model_cfg)
        opt = make_optimizer(params, train_cfg)
        opt.load(extra)
        start_epoch, step, best = meta["epoch"], meta["step"], meta["best_eval_top1"]
        done = meta.get("finished", False)
        if metrics_path.exists():
            history = [json.loads(line) for line in metrics_path.read_text().splitlines() if line.strip()]
            history = [h for h in history if h["epoch"] <= start_epoch]
    elif metrics_path.exists():
        metrics_path.unlink()

    stopped = done
    epochs_run = 0
    epoch = start_epoch
    while not stopped and epoch < train_cfg.epochs and (max_epochs is None or epochs_run < max_epochs):
        t0 = time.perf_counter()
        order = Rng(train_cfg.seed, ORDER_STREAM, epoch).permutation(train_idx)
        loss_sum, hits, seen = 0.0, 0, 0
        for bstart in range(0, order.size, train_cfg.batch_size):
            idx = order[bstart : bstart + train_cfg.batch_size]
            x, y = ds.batch(idx, train=True, seed=train_cfg.seed, epoch=epoch, aug=train_cfg.augment)
            ctx = Context(
                train=True, rng=Rng(train_cfg.seed, DROPOUT_STREAM, step),
                attn_dropout=model_cfg.attn_dropout, mlp_dropout=model_cfg.mlp_dropout,
            )
            for p in params.values():
                p.grad = None
            try:
                logits = forward(model_cfg, params, x, ctx)
                loss = cross_entropy(logits, y, train_cfg.label_smoothing)
                backward(loss)
            except NonFiniteError as exc:
                raise NumericFailure(f"epoch {epoch} step {step}: {exc}", epoch, step, (idx, x, y)) from exc
            lval = loss.item()
            if not math.isfinite(lval):
                raise NumericFailure(f"epoch {epoch} step {step}: loss is {lval}", epoch, step, (idx, x, y))
            if train_cfg.clip_grad_norm:
                clip_gradients(params, train_cfg.clip_grad_norm)
            opt.step(learning_rate(train_cfg, step, total_steps))
            step += 1
            loss_sum += lval * len(idx)
            hits += int(topk_hits(logits.data, y, 1).sum())
            seen += len(idx)
        epoch += 1
        epochs_run += 1
        ev = evaluate(model_cfg, params, ds, eval_idx)
        rec = {
            "step": step, "epoch": epoch, "train_loss": loss_sum / seen, "train_top1": hits / seen,
            "eval_top1": ev["top1"], "eval_top5": ev["top5"],
            "lr": learning_rate(train_cfg, step - 1, total_steps),
            "wall_ms": round((time.perf_counter() - t0) * 1000.0, 1),
        }
        history.append(rec)
        with metrics_path.open("a") as fh:
            fh.write(json.dumps(rec) + "\n")
        if log:
            log(rec)
        stopped = bool(train_cfg.stop_train_top1) and rec["train_top1"] >= train_cfg.stop_train_top1
        finished = stopped or epoch >= train_cfg.epochs
        score = ev["top1"] if ev["count"] else rec["train_top1"]
        meta = {
            "epoch": epoch, "step": step, "train": _train_cfg_dict(train_cfg), "finished": finished,
            "classes": ds.classes,
        }
        if score > best:
            best = score
            save_checkpoint(best_path, model_cfg, params, meta={**meta, "best_eval_top1": best})
        save_checkpoint(last_path, model_cfg, params, extra=opt.state(), meta={**meta, "best_eval_top1": best})
    return TrainResult(params, history, best, epochs_run, step, stopped)
