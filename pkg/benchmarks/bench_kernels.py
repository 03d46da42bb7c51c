#!/usr/bin/env python3
"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 7]

Each row reports the best-of-N wall time per call for both paths and the
speedup. The jitted functions are called once before timing so compilation
is excluded.
"""

import argparse
import timeit

import numpy as np

from cyclelr import kernels as K
from cyclelr._accel import HAVE_NUMBA


def best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def cases(rng):
    ts = np.arange(0, 200_000, dtype=np.int64)
    for name, kind in (("lr_series triangular", K.TRIANGULAR), ("lr_series exp_range", K.EXP_RANGE)):
        args = (kind, K.W_TRIANGULAR, 0.001, 0.006, 2000, 0.99994, 0, ts)
        yield name, lambda a=args: K.lr_series_jit(*a), lambda a=args: K.lr_series_np(*a)

    n = 100_000
    p, g, delta = rng.standard_normal(n), rng.standard_normal(n), np.empty(n)
    buf, acc = np.zeros(n), np.ones(n)
    m, v = np.zeros(n), np.ones(n)
    yield ("sgd update", lambda: K.sgd_jit(p, g, 0.01, delta),
           lambda: K.sgd_np(p, g, 0.01, delta))
    yield ("nesterov update", lambda: K.nesterov_jit(p, g, 0.01, 0.9, buf, delta),
           lambda: K.nesterov_np(p, g, 0.01, 0.9, buf, delta))
    yield ("adagrad update", lambda: K.adagrad_jit(p, g, 0.01, 1e-8, acc, delta),
           lambda: K.adagrad_np(p, g, 0.01, 1e-8, acc, delta))
    yield ("adam update", lambda: K.adam_jit(p, g, 0.001, 0.9, 0.999, 1e-8, 10, m, v, delta),
           lambda: K.adam_np(p, g, 0.001, 0.9, 0.999, 1e-8, 10, m, v, delta))

    trace = rng.standard_normal(2000).cumsum()
    yield ("moving_average w=7", lambda: K.moving_average_jit(trace, 7),
           lambda: K.moving_average_np(trace, 7))
    yield ("rolling_std w=7", lambda: K.rolling_std_jit(trace, 7),
           lambda: K.rolling_std_np(trace, 7))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--number", type=int, default=20)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for name, jit_fn, np_fn in cases(rng):
        jit_fn()  # compile
        tj = best(jit_fn, args.repeat, args.number)
        tn = best(np_fn, args.repeat, args.number)
        print(f"{name:<22}{tj * 1e6:>10.1f}us{tn * 1e6:>10.1f}us{tn / tj:>9.1f}x")


if __name__ == "__main__":
    main()
