"""``slgt`` command-line tool.

Exit codes: 0 success, 2 invalid input (bad config, data, checkpoint or
arguments), 3 numeric failure (non-finite values, failed gradient check).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as benchmod
from .attention import Context
from .config import load_config
from .data import KeypointDataset, prepare_sequence, synth_dataset
from .data import skel
from .data.transforms import sample_clip
from .graph import GraphError
from .model import ABLATIONS, ConfigError, ModelConfig, forward, gradient_suite, load_checkpoint, tiny_config
from .tensor import NonFiniteError, no_grad, serialize
from .train import NumericFailure, TrainConfig, TrainingError, evaluate, train

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
GRADCHECK_TOL = 1e-4

_INVALID = (ConfigError, GraphError, TrainingError, serialize.ContainerError, skel.SkelFormatError,
            OSError, IndexError, ValueError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _configs(args):
    if args.config:
        model, trn = load_config(args.config)
    else:
        model, trn = ModelConfig(), TrainConfig()
    if args.seed is not None:
        model = dataclasses.replace(model, seed=args.seed)
        trn = dataclasses.replace(trn, seed=args.seed)
    if args.ablate:
        model = model.with_ablations(args.ablate)
    return model, trn


def _print_json(obj):
    print(json.dumps(obj, sort_keys=True))


def cmd_synth(args):
    manifest = synth_dataset(args.out, num_classes=args.classes, samples_per_class=args.per_class,
                             seed=args.seed or 0, test_fraction=args.test_fraction, channels=args.channels)
    print(f"wrote {manifest}")
    return EXIT_OK


def cmd_train(args):
    model, trn = _configs(args)
    if args.epochs is not None:
        trn = dataclasses.replace(trn, epochs=args.epochs)
    if args.data is None:
        raise ConfigError("--data is required")
    ds = KeypointDataset(args.data, model.skeleton, channels=model.in_channels)
    out = Path(args.out)
    log = None if args.quiet else _print_json
    try:
        result = train(model, trn, ds, out, resume=args.resume, log=log)
    except NumericFailure as exc:
        idx = [] if exc.batch is None else [int(i) for i in exc.batch[0]]
        dump = {"error": str(exc), "epoch": exc.epoch, "step": exc.step, "batch_sample_ids": idx,
                "batch_files": [ds.entries[i]["file"] for i in idx]}
        out.mkdir(parents=True, exist_ok=True)
        (out / "failure.json").write_text(json.dumps(dump, indent=2) + "\n")
        print(f"numeric failure: {exc}; offending batch written to {out / 'failure.json'}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"best eval top1 {result.best_eval_top1:.4f} after {len(result.history)} epochs; "
          f"checkpoints in {out}")
    return EXIT_OK


def _load(args):
    if not args.checkpoint:
        raise ConfigError("--checkpoint is required")
    cfg, params, _, meta = load_checkpoint(args.checkpoint)
    if args.ablate and set(args.ablate) != set(cfg.ablate):
        raise ConfigError(f"checkpoint was trained with ablate={list(cfg.ablate)}, got {args.ablate}")
    return cfg, params, meta


def cmd_eval(args):
    cfg, params, _ = _load(args)
    if args.data is None:
        raise ConfigError("--data is required")
    ds = KeypointDataset(args.data, cfg.skeleton, channels=cfg.in_channels)
    idx = ds.indices(None if args.split == "all" else args.split)
    res = evaluate(cfg, params, ds, idx)
    _print_json({"split": args.split, **res})
    return EXIT_OK


def cmd_infer(args):
    cfg, params, meta = _load(args)
    seq = skel.load(args.input)
    frames = prepare_sequence(seq.frames, cfg.skeleton, cfg.in_channels, source=str(args.input))
    x = sample_clip(frames, train=False).transpose(1, 2, 0)[None]
    trace = {} if args.trace else None
    with no_grad():
        logits = forward(cfg, params, np.ascontiguousarray(x), Context(trace=trace)).data[0]
    probs = np.exp(logits - logits.max())
    probs /= probs.sum()
    classes = meta.get("classes") or [f"class{c}" for c in range(cfg.num_classes)]
    order = np.argsort(-logits, kind="stable")[: min(5, cfg.num_classes)]
    for rank, c in enumerate(order, 1):
        print(f"{rank}\t{c}\t{classes[c]}\t{probs[c]:.6f}")
    if args.trace:
        serialize.save(args.trace, trace, {"kind": "slgtformer-attention-trace", "input": str(args.input),
                                           "model": cfg.to_dict()}, magic=serialize.TRACE_MAGIC)
        print(f"attention trace with {len(trace)} maps written to {args.trace}", file=sys.stderr)
    return EXIT_OK


def cmd_gradcheck(args):
    if args.config:
        cfg, _ = _configs(args)
    else:
        cfg = tiny_config(seed=args.seed or 0)
        if args.ablate:
            cfg = cfg.with_ablations(args.ablate)
    report = gradient_suite(cfg, seed=args.seed or 0)
    if report.passed(GRADCHECK_TOL):
        print(f"PASS, max rel err < 1e-4 ({report.max_rel_err:.3e} over {report.checked} entries)")
        return EXIT_OK
    print(f"FAIL, max rel err {report.max_rel_err:.3e} >= 1e-4 at {report.worst}")
    return EXIT_NUMERIC


def cmd_bench(args):
    records = benchmod.complexity_bench(t_values=tuple(args.t), windows=args.k, d_h=args.d_h,
                                        repeats=args.repeats, seed=args.seed or 0)
    ratios = benchmod.doubling_ratios(records)
    notes = [f"k={args.k} d_h={args.d_h} repeats={args.repeats} backend={benchmod.kernel_backend()}"]
    notes += [f"ratio {m} " + " ".join(f"{t}:{r:.2f}" for t, r in sorted(v.items())) for m, v in ratios.items()]
    text = benchmod.format_report(records, notes)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--data", help="dataset manifest.json")
    common.add_argument("--checkpoint", help="model checkpoint")
    common.add_argument("--seed", type=int, help="override every seed")
    common.add_argument("--out", help="output path")
    common.add_argument("--ablate", action="append", choices=ABLATIONS, default=[],
                        help="remove a component (repeatable)")

    ap = _Parser(prog="slgt", description="Skeleton sign recognition transformer")
    sp = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sp.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--epochs", type=int, help="override the configured epoch count")
    p.add_argument("--resume", action="store_true", help="continue from OUT/last.ckpt")
    p.add_argument("--quiet", action="store_true", help="do not echo metrics records")
    p.set_defaults(func=cmd_train, out="runs/train")

    p = sp.add_parser("eval", parents=[common], help="top-1/top-5 accuracy of a checkpoint")
    p.add_argument("--split", default="test", help="manifest split name or 'all'")
    p.set_defaults(func=cmd_eval)

    p = sp.add_parser("infer", parents=[common], help="classify one .skel file")
    p.add_argument("input", help="SKEL1 keypoint file")
    p.add_argument("--trace", help="write attention maps to this file")
    p.set_defaults(func=cmd_infer)

    p = sp.add_parser("gradcheck", parents=[common], help="finite-difference check of all gradients")
    p.set_defaults(func=cmd_gradcheck)

    p = sp.add_parser("bench", parents=[common], help="attention scaling benchmark")
    p.add_argument("--t", type=int, nargs="+", default=[480, 960, 1920], help="sequence lengths")
    p.add_argument("--k", type=int, default=6, help="number of windows")
    p.add_argument("--d-h", type=int, default=16, help="head width")
    p.add_argument("--repeats", type=int, default=20)
    p.set_defaults(func=cmd_bench)

    p = sp.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--channels", type=int, choices=(2, 3), default=2)
    p.set_defaults(func=cmd_synth, out="data/synth")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NonFiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _INVALID as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
