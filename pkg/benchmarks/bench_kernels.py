"""Benchmark the compiled CG/stencil kernels against the NumPy fallback.

Run:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from funasm._kernels import BACKEND, pure

try:
    from funasm._kernels import _core as core
except ImportError:
    core = None


def time_solve(impl, rhs, hx, hy, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        _, iters, _ = impl.solve_poisson(rhs, hx, hy, 1e-10, 20_000)
        best = min(best, time.perf_counter() - t0)
    return best, iters


def time_apply(impl, u, hx, hy, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(100):
            impl.apply_neg_laplacian(u, hx, hy)
        best = min(best, time.perf_counter() - t0)
    return best / 100


def main():
    print(f"default backend: {BACKEND}")
    if core is None:
        print("compiled extension unavailable; only the pure backend is timed")
    rng = np.random.default_rng(0)
    print(f"{'grid':>10} {'kernel':>8} {'pure':>12} {'compiled':>12} {'speedup':>8}")
    for n in (33, 65, 129):
        h = 1.0 / (n - 1)
        rhs = rng.standard_normal((n - 2, n - 2))
        tp, iters = time_solve(pure, rhs, h, h, 3)
        row = f"{n}x{n:<6} {'cg':>8} {tp * 1e3:>10.2f}ms"
        if core is not None:
            tc, iters_c = time_solve(core, rhs, h, h, 3)
            assert iters == iters_c
            row += f" {tc * 1e3:>10.2f}ms {tp / tc:>7.1f}x"
        print(row + f"   ({iters} iterations)")

        ap = time_apply(pure, rhs, h, h, 3)
        row = f"{n}x{n:<6} {'stencil':>8} {ap * 1e6:>10.2f}us"
        if core is not None:
            ac = time_apply(core, rhs, h, h, 3)
            row += f" {ac * 1e6:>10.2f}us {ap / ac:>7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
