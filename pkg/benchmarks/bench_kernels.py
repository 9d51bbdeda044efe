#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Runs the three hot kernels (pairwise distances, weighted ball masses,
containment counts) on every model space at a few problem sizes and prints
a table of per-call times and speedups.  The numba path is warmed up first
so compilation does not pollute the timings.

Usage: python benchmarks/bench_kernels.py [--sizes 200 500 1000]
"""

import argparse
import time

import numpy as np

from ballcover import geometry, kernels
from ballcover.geometry import ModelSpace

SPACES = [
    ModelSpace.euclidean(2),
    ModelSpace.sphere(2),
    ModelSpace.hyperbolic(2),
    ModelSpace.torus([1.0, 1.3]),
]


def time_call(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_space(space, n, numba_impl, numpy_impl):
    rng = np.random.default_rng(0)
    pts = np.ascontiguousarray(geometry.random_points(space, n, rng))
    w = rng.uniform(0.0, 1.0, n)
    centers = np.ascontiguousarray(geometry.random_points(space, 64, rng))
    radii = rng.uniform(0.05, 0.2, 64)
    probes = np.ascontiguousarray(
        geometry.random_points(space, 20 * n, rng))
    periods = space.periods_array
    if periods is None:
        periods = kernels._EMPTY_PERIODS
    kind = space.kind_code

    rows = []
    cases = [
        ("cdist", (kind, pts, pts, periods)),
        ("mass_within", (kind, pts, w, centers, radii, periods)),
        ("contain_counts", (kind, probes, centers, radii, periods)),
    ]
    for name, args in cases:
        t_nb = time_call(numba_impl[name], *args) if numba_impl else None
        t_np = time_call(numpy_impl[name], *args)
        rows.append((space.kind, name, n, t_nb, t_np))
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=[200, 500, 1000])
    args = parser.parse_args()

    numpy_impl = kernels._NUMPY_IMPL
    try:
        numba_impl = kernels._build_numba_impl()
    except ImportError:
        numba_impl = None
        print("numba unavailable; timing the numpy backend only")

    if numba_impl:
        # warm-up pass compiles every kernel
        bench_space(SPACES[0], 50, numba_impl, numpy_impl)

    print(f"{'space':<12}{'kernel':<16}{'n':>6}{'numba':>12}{'numpy':>12}"
          f"{'speedup':>9}")
    for n in args.sizes:
        for space in SPACES:
            for kind, name, size, t_nb, t_np in bench_space(
                    space, n, numba_impl, numpy_impl):
                nb = f"{t_nb * 1e3:9.2f}ms" if t_nb is not None else "      --"
                ratio = f"{t_np / t_nb:8.1f}x" if t_nb else "      --"
                print(f"{kind:<12}{name:<16}{size:>6}{nb:>12}"
                      f"{t_np * 1e3:9.2f}ms{ratio:>9}")


if __name__ == "__main__":
    main()
