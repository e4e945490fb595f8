"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with the measured values,
then asserts.  Run the whole set with ``pytest tests/test_acceptance.py -v``
or as a script, ``python3 tests/test_acceptance.py [numbers...]``.
"""

import dataclasses
import sys
import tempfile
import time
from importlib.resources import files
from pathlib import Path

import numpy as np
import pytest

from oracles import attention_loop, attn_params, floyd_warshall, sublayer_loop
from slgtformer import graph as G
from slgtformer.attention import init_sublayer, sub
from slgtformer.bench import complexity_bench, doubling_ratios, format_report
from slgtformer.config import load_config
from slgtformer.data import KeypointDataset, mirror, normalize, sample_clip, synth_dataset
from slgtformer.lgrpe import forward_meta, positional_bias
from slgtformer.model import (
    ModelConfig,
    gradient_suite,
    init_params,
    load_checkpoint,
    save_checkpoint,
    tiny_config,
)
from slgtformer.spatial import apply_decoupled_factor, psa_forward
from slgtformer.temporal import global_attention, gsta_forward, lta_forward
from slgtformer.tensor import Tensor
from slgtformer.train import TrainConfig, train

GRAD_TOL = 1e-4
ORACLE_TOL = 1e-10
RUN_BUDGET_S = 30 * 60


def default_configs():
    return load_config(files("slgtformer") / "configs" / "default.ini")


def _jittered_sublayer(seed, d=8, heads=2):
    r = np.random.default_rng(seed)
    p = init_sublayer(r, d, heads, d // heads, 2)
    for t in p.values():
        t.data += 0.2 * r.normal(size=t.shape)
    return p


# ---------------------------------------------------------------- criteria


def criterion_1():
    t0 = time.perf_counter()
    rep = gradient_suite(tiny_config())
    secs = time.perf_counter() - t0
    ok = rep.passed(GRAD_TOL) and rep.checked == sum(v.size for v in init_params(tiny_config()).values())
    ok = ok and secs < 300
    return ok, f"max rel err {rep.max_rel_err:.2e} over {rep.checked} entries (worst {rep.worst}), {secs:.0f}s"


def criterion_2():
    r = np.random.default_rng(2)
    errs = {}
    p = _jittered_sublayer(20)
    w = {k: v.data for k, v in p.items()}
    wts = attn_params(w, "attn.")
    x = r.normal(size=(3, 24, 8))

    got = lta_forward(Tensor(x), p, 2, 4).data
    ref = np.stack([sublayer_loop(s, w, lambda h: attention_loop(h, h, *wts, 2, allowed=lambda i, j: i // 4 == j // 4)[0])
                    for s in x])
    errs["lta_vs_masked"] = np.abs(got - ref).max()

    q = dict(p, **{"sub.w": Tensor(np.eye(8)[None])})
    errs["gsta_sub1_vs_global"] = np.abs(gsta_forward(Tensor(x), q, 2, 1).data - global_attention(Tensor(x), p, 2).data).max()
    errs["lta_full_window_vs_global"] = np.abs(lta_forward(Tensor(x), p, 2, 24).data
                                               - global_attention(Tensor(x), p, 2).data).max()

    cfg = ModelConfig(d_emb=8, heads=2, d_h=4, d_pos=3, h_meta=6)
    params = init_params(cfg)
    gamma = forward_meta(params["lgrpe.gamma0"], sub(params, "lgrpe.mlp."), 2)
    bias = positional_bias(gamma, [Tensor(np.zeros(3)), Tensor(np.zeros(3))])
    xs = Tensor(r.normal(size=(4, 27, 8)))
    errs["psa_zero_vpos_vs_vanilla"] = np.abs(psa_forward(xs, p, 2, bias=bias).data - psa_forward(xs, p, 2).data).max()

    f = G.normalized_adjacency_factor(G.builtin_slgt27())
    xf = r.normal(size=(5, 27, 16))
    got = apply_decoupled_factor(Tensor(xf), G.init_decoupled_factor(f, 8)).data
    errs["decoupled_init_vs_coupled"] = np.abs(got - np.einsum("ij,bjc->bic", f, xf)).max()

    ok = all(e < ORACLE_TOL for e in errs.values())
    return ok, ", ".join(f"{k} {v:.1e}" for k, v in errs.items())


def criterion_3():
    g = G.builtin_slgt27()
    ok = np.array_equal(G.shortest_path_matrix(g), floyd_warshall(g.node_count, g.edges))
    r = np.random.default_rng(3)
    for _ in range(100):
        n = int(r.integers(2, 31))
        edges = {(int(r.integers(0, v)), v) for v in range(1, n)}
        for _ in range(int(r.integers(0, n))):
            a, b = sorted(int(v) for v in r.integers(0, n, 2))
            if a != b:
                edges.add((a, b))
        rg = G.SkeletonGraph(node_count=n, edges=tuple(sorted(edges)))
        ok = ok and np.array_equal(G.shortest_path_matrix(rg), floyd_warshall(n, rg.edges))
    f = G.normalized_adjacency_factor(g)
    sym = np.array_equal(f, f.T)
    s6 = 1 / np.sqrt(6)
    hand = np.array([[0.5, s6, 0], [s6, 1 / 3, s6], [0, s6, 0.5]])
    path_err = np.abs(G.normalized_adjacency_factor(G.path_graph(3)) - hand).max()
    ok = ok and sym and path_err <= 1e-15
    return ok, f"psi exact on builtin + 100 random graphs: {ok}, factor symmetric {sym}, 3-path err {path_err:.1e}"


def _equal_distance_pairs(psi, d_max):
    clipped = np.minimum(psi, d_max + 1)
    n = psi.shape[0]
    for i in range(n):
        for h in range(n):
            for j in range(h + 1, n):
                if clipped[i, h] == clipped[i, j]:
                    yield i, h, j


def criterion_4(manifest=None):
    cfg = ModelConfig(d_emb=16, heads=2, d_h=8, mlp_ratio=2, stage_blocks=(1, 1), sub_sizes=(2, 1), groups=2,
                      d_pos=4, h_meta=16)
    psi, d_max = cfg.psi, cfg.effective_d_max
    params = init_params(cfg)
    gamma = forward_meta(params["lgrpe.gamma0"], sub(params, "lgrpe.mlp."), cfg.heads).data
    pairs = list(_equal_distance_pairs(psi, d_max))
    init_ok = all(np.array_equal(gamma[i, h], gamma[i, j]) for i, h, j in pairs)

    with tempfile.TemporaryDirectory() as tmp:
        manifest = manifest or synth_dataset(Path(tmp) / "data", seed=0)
        ds = KeypointDataset(manifest, cfg.skeleton, channels=2)
        steps_per_epoch = -(-ds.indices("train").size // 8)
        epochs = -(-100 // steps_per_epoch)
        res = train(cfg, TrainConfig(lr=1e-3, batch_size=8, epochs=epochs, schedule="constant"), ds, Path(tmp) / "run")
    p = res.params
    gamma_t = forward_meta(p["lgrpe.gamma0"], sub(p, "lgrpe.mlp."), cfg.heads)
    bias = positional_bias(gamma_t, [p[f"block0.spatial.vpos.head{a}"] for a in range(cfg.heads)]).data
    differ = sum(1 for i, h, j in pairs if not np.array_equal(bias[:, i, h], bias[:, i, j]))
    ok = init_ok and res.step >= 100 and differ > 0
    return ok, (f"init: Gamma equal on all {len(pairs)} equal-distance pairs: {init_ok}; after {res.step} steps "
                f"{differ} pairs have distinct bias")


def criterion_5():
    r = np.random.default_rng(5)
    p = _jittered_sublayer(50)
    x = r.normal(size=(2, 48, 8))
    w = 8
    base = lta_forward(Tensor(x), p, 2, w).data
    ok, checked = True, 0
    for tok in range(0, 48, 5):
        y = x.copy()
        y[0, tok] += r.normal(size=8)
        diff = lta_forward(Tensor(y), p, 2, w).data - base
        inside = np.zeros(48, dtype=bool)
        inside[tok // w * w: tok // w * w + w] = True
        ok = ok and (diff[0, ~inside] == 0).all() and (diff[1] == 0).all() and np.abs(diff[0, inside]).max() > 0
        checked += 1
    return ok, f"{checked} single-token perturbations, outside-window differences exactly zero: {ok}"


def criterion_6():
    t0 = time.perf_counter()
    recs = complexity_bench(t_values=(480, 960, 1920), windows=6, d_h=16, repeats=20)
    secs = time.perf_counter() - t0
    ratios = doubling_ratios(recs)
    lta_ok = all(1.6 <= v <= 2.6 for v in ratios["lta"].values())
    sa_ok = all(3.2 <= v <= 4.8 for v in ratios["vanilla"].values())
    ttsa_ok = all(ratios["ttsa"][t] < ratios["vanilla"][t] for t in ratios["vanilla"])
    ok = lta_ok and sa_ok and ttsa_ok and secs < 600
    fmt = lambda m: "/".join(f"{v:.2f}" for _, v in sorted(ratios[m].items()))  # noqa: E731
    detail = (f"doubling ratios lta {fmt('lta')} (want 1.6-2.6), vanilla {fmt('vanilla')} (want 3.2-4.8), "
              f"ttsa {fmt('ttsa')} (want < vanilla), fixed-window lta {fmt('lta_fixed_w')}, {secs:.0f}s")
    return ok, detail, format_report(recs)


def _run(model_cfg, train_cfg, ds, out, budget_s):
    """Train one epoch at a time (resuming) until the run stops itself or the budget is spent."""
    t0 = time.perf_counter()
    while True:
        res = train(model_cfg, train_cfg, ds, out, resume=True, max_epochs=1)
        elapsed = time.perf_counter() - t0
        if res.epochs_run == 0 or res.stopped_early or elapsed > budget_s:
            return res, elapsed


def criterion_7(workdir=None):
    model_cfg, train_cfg = default_configs()
    lines, ok = [], True
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(workdir or tmp)
        t0 = time.perf_counter()
        manifest = synth_dataset(root / "data", num_classes=10, samples_per_class=50, seed=0)
        ds = KeypointDataset(manifest, model_cfg.skeleton, channels=model_cfg.in_channels)
        res, _ = _run(model_cfg, dataclasses.replace(train_cfg, stop_train_top1=0.95), ds, root / "full", RUN_BUDGET_S)
        secs = time.perf_counter() - t0
        last = res.history[-1]
        main_ok = last["train_top1"] >= 0.95 and last["eval_top1"] >= 0.70 and secs < RUN_BUDGET_S
        ok = ok and main_ok
        lines.append(f"full: train {last['train_top1']:.3f} held-out {last['eval_top1']:.3f} "
                     f"after {last['epoch']} epochs, {secs / 60:.1f} min")
        for ab in ("lgrpe", "ttsa", "factor"):
            t1 = time.perf_counter()
            res, _ = _run(model_cfg.with_ablations([ab]), dataclasses.replace(train_cfg, stop_train_top1=0.90), ds,
                          root / f"ablate-{ab}", RUN_BUDGET_S)
            last = res.history[-1]
            ab_ok = last["train_top1"] >= 0.90
            ok = ok and ab_ok
            lines.append(f"-{ab}: train {last['train_top1']:.3f} after {last['epoch']} epochs, "
                         f"{(time.perf_counter() - t1) / 60:.1f} min")
    return ok, "; ".join(lines)


def criterion_8():
    checks = {}
    x = np.arange(10, dtype=float)[:, None, None] * np.ones((1, 2, 2))
    clip = sample_clip(x, train=False)
    checks["eval_clip_is_frames_15_134_of_padded"] = clip.shape[0] == 120 and (clip == x[9]).all()
    long = np.arange(200, dtype=float)[:, None, None] * np.ones((1, 1, 2))
    checks["offset_0_is_0_119"] = np.array_equal(sample_clip(long, True, offset=0)[:, 0, 0], np.arange(120))
    checks["eval_offset_15"] = np.array_equal(sample_clip(long, False)[:, 0, 0], np.arange(15, 135))
    r = np.random.default_rng(8)
    checks["always_120"] = all(sample_clip(r.normal(size=(n, 3, 2)), True, np.random.default_rng(n)).shape[0] == 120
                               for n in (1, 37, 119, 120, 121, 150, 151, 400))
    mid = np.arange(60, dtype=float)[:, None, None] * np.ones((1, 1, 2))
    full = sample_clip(mid, True, offset=30)
    checks["pad_repeats_last"] = np.array_equal(full[:30, 0, 0], np.arange(30, 60)) and (full[30:] == 59).all()

    box = r.uniform(0, 10, (5, 27, 2))
    box[1, 3], box[4, 7] = [0, 0], [10, 10]
    nb = normalize(box)
    checks["normalize_endpoints"] = (nb[1, 3] == -1).all() and (nb[4, 7] == 1).all() and nb.min() == -1 and nb.max() == 1

    perm = G.builtin_slgt27().mirror_permutation()
    y = r.normal(size=(7, 27, 3))
    checks["mirror_involution"] = np.array_equal(mirror(mirror(y, perm), perm), y)

    cfg = ModelConfig()
    params = init_params(cfg)
    for v in params.values():
        v.data += r.normal(size=v.shape) * 1e-3
    with tempfile.TemporaryDirectory() as tmp:
        save_checkpoint(Path(tmp) / "m.ckpt", cfg, params)
        cfg2, back, _, _ = load_checkpoint(Path(tmp) / "m.ckpt")
    checks["checkpoint_bit_exact"] = cfg2 == cfg and all(
        back[k].data.tobytes() == v.data.tobytes() for k, v in params.items()
    )
    ok = all(checks.values())
    return ok, ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items())


# ---------------------------------------------------------------- pytest wrappers


def _line(n, ok, detail):
    return f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"


def _check(capsys, n, ok, detail):
    with capsys.disabled():
        print("\n" + _line(n, ok, detail), flush=True)
    assert ok, detail


def test_criterion_1_gradients(capsys):
    ok, detail = criterion_1()
    _check(capsys, 1, ok, detail)


def test_criterion_2_oracle_equivalences(capsys):
    ok, detail = criterion_2()
    _check(capsys, 2, ok, detail)


def test_criterion_3_graph_math(capsys):
    ok, detail = criterion_3()
    _check(capsys, 3, ok, detail)


@pytest.mark.slow
def test_criterion_4_lgrpe_ambiguity(capsys):
    ok, detail = criterion_4()
    _check(capsys, 4, ok, detail)


def test_criterion_5_window_isolation(capsys):
    ok, detail = criterion_5()
    _check(capsys, 5, ok, detail)


@pytest.mark.slow
def test_criterion_6_complexity(capsys):
    ok, detail, report = criterion_6()
    with capsys.disabled():
        print("\n" + report, end="")
    _check(capsys, 6, ok, detail)


@pytest.mark.slow
def test_criterion_7_end_to_end(capsys):
    ok, detail = criterion_7()
    _check(capsys, 7, ok, detail)


def test_criterion_8_pipeline(capsys):
    ok, detail = criterion_8()
    _check(capsys, 8, ok, detail)


if __name__ == "__main__":
    wanted = [int(a) for a in sys.argv[1:]] or list(range(1, 9))
    failed = 0
    for n in wanted:
        out = globals()[f"criterion_{n}"]()
        if n == 6:
            print(out[2], end="")
        print(_line(n, out[0], out[1]), flush=True)
        failed += not out[0]
    sys.exit(1 if failed else 0)
