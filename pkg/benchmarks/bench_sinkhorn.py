"""Compare the compiled and pure-numpy scaling-iteration backends.

Usage: python benchmarks/bench_sinkhorn.py [--iters 100]
"""

import argparse
import time

import numpy as np

from wclot._kernels import get_backend
from wclot.sinkhorn import cost_matrix


def make_cost(rng, n):
    return np.ascontiguousarray(
        cost_matrix(rng.random((n, 3)), rng.random((n, 3))).entries)


def time_forward(backend, cost, eps, iters, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        backend.log_forward(cost, eps, iters, 0.0, False)
        best = min(best, time.perf_counter() - t0)
    return best


def time_backward(backend, cost, eps, iters, repeats=3):
    m, n = cost.shape
    f, g, it, _, fh, gh = backend.log_forward(cost, eps, iters, 0.0, True)
    rng = np.random.default_rng(0)
    df, dg = rng.standard_normal(m), rng.standard_normal(n)
    best = np.inf
    for _ in range(repeats):
        d_cost = np.zeros_like(cost)
        t0 = time.perf_counter()
        backend.log_backward(cost, eps, fh, gh, it, df, dg, d_cost)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--iters", type=int, default=100)
    parser.add_argument("--eps", type=float, default=1e-3)
    args = parser.parse_args()

    backends = {}
    for name in ("ext", "numpy"):
        try:
            backends[name] = get_backend(name)
        except (ImportError, ValueError):
            print(f"backend {name!r} unavailable, skipping")
    rng = np.random.default_rng(7)

    print(f"\nlog-domain forward, {args.iters} iterations, eps={args.eps:g}")
    print(f"{'size':>10} " + " ".join(f"{name:>12}" for name in backends)
          + ("     speedup" if len(backends) == 2 else ""))
    for n in (64, 128, 256, 512, 832):
        cost = make_cost(rng, n)
        times = {name: time_forward(b, cost, args.eps, args.iters)
                 for name, b in backends.items()}
        row = f"{n:>5}x{n:<5}" + " ".join(f"{times[name] * 1e3:>10.1f}ms" for name in backends)
        if len(times) == 2:
            row += f"   {times['numpy'] / times['ext']:>8.1f}x"
        print(row)

    print(f"\nunrolled backward through {args.iters} recorded iterations")
    for n in (64, 128, 256):
        cost = make_cost(rng, n)
        times = {name: time_backward(b, cost, args.eps, args.iters)
                 for name, b in backends.items()}
        row = f"{n:>5}x{n:<5}" + " ".join(f"{times[name] * 1e3:>10.1f}ms" for name in backends)
        if len(times) == 2:
            row += f"   {times['numpy'] / times['ext']:>8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
