#!/usr/bin/env python3
"""Benchmark the numba kernel backend against the pure-NumPy fallback.

Times each hot kernel on training-shaped inputs and prints a table with
the speedup. Numba functions are called once before timing so
compilation is not measured.

Usage: python benchmarks/bench_kernels.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from currank.kernels import npy

try:
    from currank.kernels import jit
except ImportError:
    jit = None

RNG = np.random.default_rng(0)

D, H = 5, 16
BATCH = 16
THETA = RNG.normal(scale=0.5, size=H * D + 2 * H + 1)


def bench(fn, args, repeats, mutates=()):
    fn(*args)  # warm-up (and numba compilation)
    best = np.inf
    for _ in range(5):
        for arr in mutates:
            arr.fill(0.0)
        start = time.perf_counter()
        for _ in range(repeats):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / repeats)
    return best


def cases():
    x = RNG.normal(size=(BATCH, D))
    xn = RNG.normal(size=(BATCH, D))
    targets = RNG.integers(0, 2, size=BATCH).astype(np.float64)
    weights = RNG.uniform(size=BATCH)
    big_x = RNG.normal(size=(5000, D))

    points = RNG.normal(loc=10, scale=3, size=100)
    grid = np.linspace(0, 20, 200)

    theta = THETA.copy()
    grad = RNG.normal(size=THETA.shape)
    mom1 = np.zeros_like(theta)
    mom2 = np.zeros_like(theta)

    n_docs = 30000
    scores = np.zeros(n_docs)
    ids = np.sort(RNG.choice(n_docs, size=300, replace=False)).astype(np.int64)
    tfs = RNG.integers(1, 4, size=300).astype(np.float64)
    norm = 0.6 + 0.4 * RNG.uniform(0.3, 2.5, size=n_docs)

    yield "mlp_scores (5000x5)", "mlp_scores", (THETA, D, H, big_x), ()
    yield "pointwise_loss_grad (batch 16)", "pointwise_loss_grad", (THETA, D, H, x, targets, weights), ()
    yield "pairwise_loss_grad (batch 16)", "pairwise_loss_grad", (THETA, D, H, x, xn, weights), ()
    yield "adam_update (113 params)", "adam_update", (theta, grad, mom1, mom2, 1, 1e-3, 0.9, 0.999, 1e-8), ()
    yield "kde_cdf_many (100 pts x 200 xs)", "kde_cdf_many", (points, 1.3, grid), ()
    yield "bm25_accumulate (300 postings)", "bm25_accumulate", (scores, ids, tfs, 2.0, 0.9, norm), (scores,)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    if jit is None:
        print("numba not available: timing the NumPy backend only")
    header = f"{'kernel':35s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s}"
    print(header)
    print("-" * len(header))
    for label, name, fn_args, mutates in cases():
        t_np = bench(getattr(npy, name), fn_args, args.repeats, mutates)
        if jit is not None:
            t_jit = bench(getattr(jit, name), fn_args, args.repeats, mutates)
            print(f"{label:35s} {t_np * 1e6:10.1f}us {t_jit * 1e6:10.1f}us {t_np / t_jit:8.1f}x")
        else:
            print(f"{label:35s} {t_np * 1e6:10.1f}us {'-':>12s} {'-':>9s}")


if __name__ == "__main__":
    main()
