"""Wall-clock scaling of the temporal attention variants.

Each mechanism is timed forward-only on random ``B x T x D`` input with
``D = heads * d_h``.  The timed region is the attention operation itself
(Q/K/V/O projections, logits, softmax, weighted sum and any window
reshaping or summary convolution); layer norm and the MLP are left out.

Mechanisms:

``lta``          local attention in ``k`` windows of ``T/k`` tokens
``gsta``         every token attends to ``k`` strided-conv window summaries
``ttsa``         ``lta`` followed by ``gsta``
``vanilla``      full self-attention over ``T`` tokens
``lta_fixed_w``  local attention with a fixed window of ``FIXED_WINDOW`` tokens

Report format (UTF-8 text, one record per line)::

    # slgt-bench 1
    mechanism<TAB>T<TAB>median_ns<TAB>p10_ns<TAB>p90_ns
    lta<TAB>480<TAB>1234567<TAB>...

Lines starting with ``#`` are comments.  Records are ordered by mechanism
then ``T``.
"""

from __future__ import annotations

import time

import numpy as np

from .attention import init_attention, multi_head
from .temporal import averaging_kernel
from .tensor import Rng, Tensor, kernels, no_grad, reshape, strided_conv1d

MECHANISMS = ("lta", "gsta", "ttsa", "vanilla", "lta_fixed_w")
FIXED_WINDOW = 20
REPORT_HEADER = "# slgt-bench 1"
COLUMNS = ("mechanism", "T", "median_ns", "p10_ns", "p90_ns")


def _local(x, p, heads, w):
    b, t, d = x.shape
    xw = reshape(x, (b * (t // w), w, d))
    return reshape(multi_head(xw, xw, p, heads)[0], (b, t, d))


def _summary(x, p, heads, kernel):
    kv = strided_conv1d(x, kernel, kernel.shape[0])
    return multi_head(x, kv, p, heads)[0]


def kernel_backend() -> str:
    return kernels.BACKEND


def mechanism_fn(name: str, t: int, windows: int, d_emb: int, p: dict, heads: int):
    """Callable ``f(x)`` running one mechanism at length ``t``."""
    if t % windows:
        raise ValueError(f"T={t} is not divisible by k={windows}")
    w = t // windows
    kernel = Tensor(averaging_kernel(w, d_emb))
    if name == "lta":
        return lambda x: _local(x, p, heads, w)
    if name == "gsta":
        return lambda x: _summary(x, p, heads, kernel)
    if name == "ttsa":
        return lambda x: _summary(_local(x, p, heads, w), p, heads, kernel)
    if name == "vanilla":
        return lambda x: multi_head(x, x, p, heads)[0]
    if name == "lta_fixed_w":
        if t % FIXED_WINDOW:
            raise ValueError(f"T={t} is not divisible by the fixed window {FIXED_WINDOW}")
        return lambda x: _local(x, p, heads, FIXED_WINDOW)
    raise ValueError(f"unknown mechanism {name!r}; expected one of {MECHANISMS}")


def complexity_bench(t_values=(480, 960, 1920), windows: int = 6, d_h: int = 16, heads: int = 4,
                     batch: int = 2, repeats: int = 20, warmup: int = 2, seed: int = 0,
                     mechanisms=MECHANISMS) -> list:
    """Time every mechanism at every ``T``; returns a list of record dicts."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    d_emb = heads * d_h
    rng = Rng(seed, 0xBE7C)
    p = {k: Tensor(v.data) for k, v in init_attention(rng, d_emb, heads, d_h).items()}
    records = []
    with no_grad():
        for name in mechanisms:
            for t in t_values:
                x = Tensor(rng.spawn(t).normal(0.0, 1.0, (batch, t, d_emb)))
                fn = mechanism_fn(name, t, windows, d_emb, p, heads)
                for _ in range(warmup):
                    fn(x)
                samples = []
                for _ in range(repeats):
                    t0 = time.perf_counter_ns()
                    fn(x)
                    samples.append(time.perf_counter_ns() - t0)
                s = np.asarray(samples, dtype=np.float64)
                records.append({
                    "mechanism": name,
                    "T": int(t),
                    "median_ns": int(np.median(s)),
                    "p10_ns": int(np.percentile(s, 10)),
                    "p90_ns": int(np.percentile(s, 90)),
                })
    return records


def format_report(records, comments=()) -> str:
    lines = [REPORT_HEADER] + [f"# {c}" for c in comments] + ["\t".join(COLUMNS)]
    lines += ["\t".join(str(r[c]) for c in COLUMNS) for r in records]
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> list:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != REPORT_HEADER:
        raise ValueError("not a slgt-bench report")
    body = [ln for ln in lines if not ln.startswith("#")]
    if not body or tuple(body[0].split("\t")) != COLUMNS:
        raise ValueError("missing column header")
    out = []
    for ln in body[1:]:
        parts = ln.split("\t")
        if len(parts) != len(COLUMNS):
            raise ValueError(f"bad record {ln!r}")
        rec = dict(zip(COLUMNS, parts))
        for c in COLUMNS[1:]:
            rec[c] = int(rec[c])
        out.append(rec)
    return out


def doubling_ratios(records) -> dict:
    """``{mechanism: {T: median(2T) / median(T)}}`` for every T whose double was measured."""
    med = {(r["mechanism"], r["T"]): r["median_ns"] for r in records}
    out = {}
    for (name, t), m in med.items():
        if (name, 2 * t) in med:
            out.setdefault(name, {})[t] = med[(name, 2 * t)] / m
    return out
