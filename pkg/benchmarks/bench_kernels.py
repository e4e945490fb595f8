"""Compare the compiled and numpy row kernels on typical activation shapes.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]

Prints one TSV line per (kernel, shape, backend) with the median time and
the speedup of the compiled backend over the fallback.
"""

import argparse
import statistics
import time

import numpy as np

from slgtformer.tensor import kernels

SHAPES = [(25920, 64), (3240, 256), (8 * 27 * 120 * 4 // 6, 20)]


def _cases(x):
    g = np.ones(x.shape[1])
    b = np.zeros(x.shape[1])
    y = kernels.softmax_rows(x)
    ln = kernels.layer_norm_rows(x, g, b, 1e-5)
    dy = np.ones_like(x)
    return {
        "softmax": lambda: kernels.softmax_rows(x),
        "softmax_bwd": lambda: kernels.softmax_rows_backward(y, dy),
        "layer_norm": lambda: kernels.layer_norm_rows(x, g, b, 1e-5),
        "layer_norm_bwd": lambda: kernels.layer_norm_rows_backward(dy, *ln[1:], g),
        "gelu": lambda: kernels.gelu(x),
        "gelu_bwd": lambda: kernels.gelu_backward(x, dy),
    }


def time_call(fn, repeats):
    fn()
    out = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        out.append(time.perf_counter_ns() - t0)
    return statistics.median(out)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("# compiled kernels not built; timing the numpy fallback only")
    print("kernel\tshape\tbackend\tmedian_us\tspeedup")
    x_all = {s: np.random.default_rng(0).normal(size=s) for s in SHAPES}
    for shape, x in x_all.items():
        times = {}
        for be in backends:
            kernels.use_backend(be)
            for name, fn in _cases(x).items():
                times[(name, be)] = time_call(fn, args.repeats)
        for name in _cases(x):
            base = times[(name, "python")]
            for be in backends:
                t = times[(name, be)]
                print(f"{name}\t{shape[0]}x{shape[1]}\t{be}\t{t / 1e3:.1f}\t{base / t:.2f}")


if __name__ == "__main__":
    main()
