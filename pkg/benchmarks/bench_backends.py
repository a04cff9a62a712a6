#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times ensemble training, prediction, and global SHAP attribution on
synthetic data at two widths, running the identical workload under both
backends. The first numba call includes JIT compilation, so each section is
warmed once before timing.

Usage:
    python benchmarks/bench_backends.py [--quick]
"""

import argparse
import time

import numpy as np

from treetrust import kernels
from treetrust.data import SyntheticSpec, generate_synthetic
from treetrust.ensemble import HyperParams, fit, predict
from treetrust.explain import shap_global


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


def bench_backend(name, cases, repeats):
    kernels.set_backend(name)
    results = {}
    for label, (data, params) in cases.items():
        model = fit(data, params, "xgb", "classification")   # warm the JIT
        results[f"fit {label}"] = time_call(
            lambda: fit(data, params, "xgb", "classification"), repeats)
        results[f"predict {label}"] = time_call(
            lambda: predict(model, data.X), repeats)
        results[f"shap_global {label}"] = time_call(
            lambda: shap_global(model, data.X), repeats)
    return results


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true",
                        help="smaller models, single repeat")
    args = parser.parse_args()
    repeats = 1 if args.quick else 3
    n_trees = 20 if args.quick else 100

    cases = {}
    for d in (5, 50):
        data, _ = generate_synthetic(SyntheticSpec(300, d, seed=0))
        cases[f"d={d}"] = (data, HyperParams(n_trees=n_trees, max_depth=6))

    available = kernels.available_backends()
    if "numba" not in available:
        print("numba is not importable; nothing to compare")
        return
    print(f"workload: n=300, n_trees={n_trees}, depth 6, best of {repeats}")
    numba_times = bench_backend("numba", cases, repeats)
    numpy_times = bench_backend("numpy", cases, repeats)

    width = max(len(k) for k in numba_times)
    print(f"{'operation'.ljust(width)}  {'numba':>10}  {'numpy':>10}  speedup")
    for key in numba_times:
        nb, np_ = numba_times[key], numpy_times[key]
        print(f"{key.ljust(width)}  {nb * 1e3:9.1f}ms  {np_ * 1e3:9.1f}ms  "
              f"{np_ / nb:6.1f}x")


if __name__ == "__main__":
    main()
