#!/usr/bin/env python3
"""Benchmark the jitted kernel builds against the numpy fallbacks.

The package selects its kernel path at import time from the FLIMSOD_NUMBA
environment flag; this script sidesteps the switch and times both builds
directly on identical inputs, verifying they agree while at it.

Usage:
    python benchmarks/bench_kernels.py [--size 256] [--repeats 5]
"""

import argparse
import time

import numpy as np

from flimsod.accel import HAS_NUMBA
from flimsod.kernels import (
    _conv_bank_numpy,
    _grow_forest_python,
    _pool_numpy,
)

if HAS_NUMBA:
    from flimsod.kernels import (
        _conv_bank_numba,
        _grow_forest_numba,
        _pool_numba,
    )


def timeit(fn, *args, repeats=5):
    best = np.inf
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=256, help="image side length")
    parser.add_argument("--channels", type=int, default=8)
    parser.add_argument("--kernels", type=int, default=16)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not HAS_NUMBA:
        print("numba is not installed; only the numpy fallback can run")
        return

    rng = np.random.default_rng(0)
    s, m, n = args.size, args.channels, args.kernels
    data = rng.normal(size=(s, s, m))
    kernels = rng.normal(size=(n, 9 * m))
    biases = rng.normal(size=n)

    print(f"input {s}x{s}x{m}, {n} kernels of 3x3, best of {args.repeats}\n")
    print(f"{'kernel':<18}{'numba':>12}{'numpy':>12}{'speedup':>10}{'max |diff|':>14}")

    # one warm call compiles the jitted builds before timing
    _conv_bank_numba(data[:8, :8], kernels, biases, 3, 1, 1)
    t_nb, out_nb = timeit(_conv_bank_numba, data, kernels, biases, 3, 1, 1,
                          repeats=args.repeats)
    t_np, out_np = timeit(_conv_bank_numpy, data, kernels, biases, 3, 1, 1,
                          repeats=args.repeats)
    diff = np.max(np.abs(out_nb - out_np))
    print(f"{'convolution':<18}{t_nb * 1e3:>10.1f}ms{t_np * 1e3:>10.1f}ms"
          f"{t_np / t_nb:>9.1f}x{diff:>14.2e}")

    _pool_numba(data[:8, :8], 3, 2, 0)
    for kind, name in ((0, "max pooling"), (1, "avg pooling")):
        t_nb, out_nb = timeit(_pool_numba, data, 3, 2, kind, repeats=args.repeats)
        t_np, out_np = timeit(_pool_numpy, data, 3, 2, kind, repeats=args.repeats)
        diff = np.max(np.abs(out_nb - out_np))
        print(f"{name:<18}{t_nb * 1e3:>10.1f}ms{t_np * 1e3:>10.1f}ms"
              f"{t_np / t_nb:>9.1f}x{diff:>14.2e}")

    colors = rng.random((s, s, 3))
    seeds = np.array([0, s * s // 2 + s // 2, s * s - 1], dtype=np.int64)
    labels = np.array([2, 1, 2], dtype=np.int64)
    _grow_forest_numba(np.ascontiguousarray(colors[:8, :8]),
                       np.array([0], np.int64), np.array([1], np.int64))
    t_nb, (lab_nb, _) = timeit(_grow_forest_numba, colors, seeds, labels,
                               repeats=args.repeats)
    t_np, (lab_np, _) = timeit(_grow_forest_python, colors, seeds, labels,
                               repeats=max(1, args.repeats // 2))
    agree = "exact" if np.array_equal(lab_nb, lab_np) else "MISMATCH"
    print(f"{'seeded forest':<18}{t_nb * 1e3:>10.1f}ms{t_np * 1e3:>10.1f}ms"
          f"{t_np / t_nb:>9.1f}x{agree:>14}")


if __name__ == "__main__":
    main()
