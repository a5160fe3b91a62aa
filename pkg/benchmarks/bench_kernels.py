"""Time the numba kernels against the pure-numpy fallback.

Runs each hot kernel on release-sized inputs with both backends and
prints a speedup table. With DPHIST_NUMBA=0 (or numba missing) only the
numpy backend is timed.

Usage: python benchmarks/bench_kernels.py [--grid 256] [--repeat 5]
"""

import argparse
import time

import numpy as np

from dphist import kernels


def timeit(fn, *args, repeat):
    fn(*args)  # warm-up (JIT compile)
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--grid", type=int, default=256)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    n = args.grid
    rng = np.random.default_rng(0)
    counts = rng.integers(0, 50, size=(n, n))

    # 4096 single-cell leaves plus coarse blocks, 2000 random queries
    r = np.repeat(np.arange(64, dtype=np.int64), 64)
    c = np.tile(np.arange(64, dtype=np.int64), 64)
    bounds = np.stack([r * (n // 64), (r + 1) * (n // 64), c * (n // 64), (c + 1) * (n // 64)], axis=1)
    ncounts = rng.normal(0, 30, size=len(bounds))
    queries = []
    for _ in range(2000):
        r0, c0 = rng.integers(0, n, size=2)
        queries.append((int(r0), int(rng.integers(r0 + 1, n + 1)), int(c0), int(rng.integers(c0 + 1, n + 1))))
    queries = np.array(queries, dtype=np.int64)

    # tree construction evaluates the objective mostly on small node regions
    regions = []
    for _ in range(2000):
        r0, c0 = rng.integers(0, n - 16, size=2)
        side = int(rng.integers(4, 17))
        regions.append((int(r0), int(r0 + side), int(c0), int(c0 + side)))

    def objective_batch(impl):
        def run(counts_arr):
            acc = 0.0
            for r0, r1, c0, c1 in regions:
                acc += impl(counts_arr, r0, r1, c0, c1, (r1 - r0) // 2, True)
            return acc

        return run

    cases = [
        ("objective_at (full domain)", kernels.objective_at, kernels.objective_at_np,
         (counts, 0, n, 0, n, n // 2, True)),
        ("objective_at (2000 node regions)", objective_batch(kernels.objective_at),
         objective_batch(kernels.objective_at_np), (counts,)),
        ("objective_scan (full axis)", kernels.objective_scan, kernels.objective_scan_np,
         (counts, 0, n, 0, n, True)),
        ("answer_workload (2000 q x 4096 leaves)", kernels.answer_workload, kernels.answer_workload_np,
         (bounds, ncounts, queries)),
    ]

    print(f"grid={n}x{n}, active backend: {kernels.backend()}")
    header = f"{'kernel':<40} {'numpy':>10} {'numba':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, fast, slow, case_args in cases:
        t_np = timeit(slow, *case_args, repeat=args.repeat)
        if kernels.NUMBA_ENABLED:
            t_nb = timeit(fast, *case_args, repeat=args.repeat)
            print(f"{name:<40} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms {t_np / t_nb:>7.1f}x")
        else:
            print(f"{name:<40} {t_np * 1e3:>8.2f}ms {'-':>10} {'-':>8}")
    if not kernels.NUMBA_ENABLED:
        print("numba backend disabled (DPHIST_NUMBA=0 or numba not installed)")


if __name__ == "__main__":
    main()
