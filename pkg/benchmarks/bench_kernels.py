#!/usr/bin/env python3
"""Benchmark the compiled kernel extension against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--sizes 200,1000,5000]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from chainaudit._kernels import _pure

try:
    from chainaudit._kernels import _speedups
except ImportError:
    _speedups = None


def make_case(rng, n):
    return {
        "fee": rng.integers(1, 10**7, n).astype(np.int64),
        "vsize": rng.integers(110, 10_000, n).astype(np.int64),
        "recv": rng.integers(0, 10**6, n).astype(np.int64),
        "tie": rng.permutation(n).astype(np.int64),
        "parent": np.full(n, -1, dtype=np.int64),
        "blk": rng.integers(0, max(n // 50, 1), n).astype(np.int64),
    }


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(impl, case, n):
    capacity = int(case["vsize"].sum() // 3)
    return {
        "feerate_order": timeit(
            lambda: impl.feerate_order(case["fee"], case["vsize"],
                                       case["recv"], case["tie"]),
            repeat=3),
        "greedy_fill": timeit(
            lambda: impl.greedy_fill(case["fee"], case["vsize"], case["recv"],
                                     case["tie"], case["parent"], capacity),
            repeat=3),
        "count_violations": timeit(
            lambda: impl.count_violations(case["recv"], case["fee"],
                                          case["vsize"], case["blk"], 0),
            repeat=1 if n > 2000 else 3),
        "perc_errors": timeit(
            lambda: impl.perc_errors(case["fee"], case["vsize"]),
            repeat=3),
    }


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="200,1000,5000")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(1)
    print(f"{'kernel':<18} {'n':>7} {'pure':>12} {'ext':>12} {'speedup':>9}")
    for n in sizes:
        case = make_case(rng, n)
        pure_times = bench(_pure, case, n)
        ext_times = bench(_speedups, case, n) if _speedups else None
        for name, pure_t in pure_times.items():
            if ext_times:
                ext_t = ext_times[name]
                ratio = pure_t / ext_t if ext_t > 0 else float("inf")
                print(f"{name:<18} {n:>7} {pure_t * 1e3:>10.2f}ms "
                      f"{ext_t * 1e3:>10.2f}ms {ratio:>8.1f}x")
            else:
                print(f"{name:<18} {n:>7} {pure_t * 1e3:>10.2f}ms "
                      f"{'n/a':>12} {'':>9}")
    if _speedups is None:
        print("\nextension not built; showing fallback only")


if __name__ == "__main__":
    main()
