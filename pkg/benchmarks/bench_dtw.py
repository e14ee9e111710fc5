#!/usr/bin/env python3
"""Benchmark the compiled DTW kernel against the pure-Python fallback.

Usage:
    python benchmarks/bench_dtw.py [--repeats N]

Times the raw accumulation kernel on a grid of sequence lengths and an
end-to-end ABX cell evaluation, printing per-call latency and speedup.
"""

import argparse
import statistics
import time

import numpy as np

from zrc_eval import _dtw_py
from zrc_eval import abx
from zrc_eval.distance import frame_cost_matrix

try:
    from zrc_eval import _dtw
except ImportError:
    _dtw = None


def time_call(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_kernel(repeats):
    rng = np.random.default_rng(0)
    print(f"{'size':>12} {'python':>12} {'compiled':>12} {'speedup':>9}")
    for t, s in ((20, 20), (50, 50), (100, 100), (200, 200), (500, 500)):
        cost = np.ascontiguousarray(rng.random((t, s)))
        py = time_call(lambda: _dtw_py.dtw_accumulate(cost), repeats)
        if _dtw is None:
            print(f"{t}x{s:>7} {py * 1e3:>10.3f}ms {'-':>12} {'-':>9}")
            continue
        cy = time_call(lambda: _dtw.dtw_accumulate(cost), repeats)
        assert _dtw.dtw_accumulate(cost) == _dtw_py.dtw_accumulate(cost)
        print(f"{t}x{s:>7} {py * 1e3:>10.3f}ms {cy * 1e3:>10.3f}ms "
              f"{py / cy:>8.1f}x")


def bench_abx_cell(repeats):
    """One within-speaker cell: 5 tokens per side, 30-frame sequences."""
    rng = np.random.default_rng(1)
    a = [rng.standard_normal((30, 50)) for _ in range(5)]
    b = [rng.standard_normal((30, 50)) for _ in range(5)]

    import zrc_eval.distance as dist_mod

    def run_with(kernel):
        original = dist_mod._kernel
        dist_mod._kernel = kernel
        try:
            return time_call(lambda: abx.symmetrized_cell(a, b, "angular"),
                             repeats)
        finally:
            dist_mod._kernel = original

    py = run_with(_dtw_py)
    print(f"\nABX cell (5x5 tokens, 30x50 frames):")
    if _dtw is None:
        print(f"  python   {py * 1e3:8.1f} ms")
        return
    cy = run_with(_dtw)
    print(f"  python   {py * 1e3:8.1f} ms")
    print(f"  compiled {cy * 1e3:8.1f} ms   ({py / cy:.1f}x)")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    if _dtw is None:
        print("compiled kernel not available; timing the fallback only\n")
    bench_kernel(args.repeats)
    bench_abx_cell(args.repeats)


if __name__ == "__main__":
    main()
