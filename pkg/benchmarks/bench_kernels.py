#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-python fallback.

Usage:
    python benchmarks/bench_kernels.py [--repeat N]

The simulator picks whichever backend imports successfully (compiled when
available); this script times both on the same inputs so the trade-off is
visible on the machine at hand.
"""

import argparse
import time

import numpy as np

from sasim._kernels import _fallback

try:
    from sasim._kernels import _native
except ImportError:
    _native = None


def timeit(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench(repeat):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((8, 56, 56, 32)).astype(np.float32)
    w = rng.standard_normal((3, 3, 32, 32)).astype(np.float32)
    xi = rng.integers(-4, 5, size=(4, 40, 40, 16)).astype(np.int64)
    wi = rng.integers(-4, 5, size=(3, 3, 16, 16)).astype(np.int64)
    keys = rng.integers(0, 4096, size=400_000).astype(np.int64)

    cases = [
        ("conv2d f32 8x56x56x32", "conv2d_nhwc", (x, w, 1, 1, 1, 1, 1, 1)),
        ("conv2d i64 4x40x40x16", "conv2d_nhwc", (xi, wi, 2, 2, 1, 1, 1, 1)),
        ("im2col  i64 4x40x40x16", "im2col_nhwc", (xi, 3, 3, 1, 1, 1, 1, 1, 1, True)),
        ("gather  i64 4x40x40x16", "tile_gather_nhwc", (xi, 1, 1, 1, 1, 1, 1, 1, 1, 40, 40)),
        ("lru 400k keys, cap 1k", "lru_simulate", (keys, 1024)),
    ]

    print(f"{'kernel':<26} {'python':>12} {'native':>12} {'speedup':>9}")
    for label, name, args in cases:
        t_py = timeit(getattr(_fallback, name), args, repeat)
        if _native is None:
            print(f"{label:<26} {t_py * 1e3:>10.2f}ms {'n/a':>12} {'-':>9}")
            continue
        t_nat = timeit(getattr(_native, name), args, repeat)
        print(f"{label:<26} {t_py * 1e3:>10.2f}ms {t_nat * 1e3:>10.2f}ms "
              f"{t_py / t_nat:>8.1f}x")
    if _native is None:
        print("\nnative kernels not built; install with a working C toolchain")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    bench(ap.parse_args().repeat)
