"""Benchmark the compiled propagation kernel against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--s 8192] [--modes 64] [--dim 2]

The marched recurrence is the hot loop of every solve (one pass per
fixed-point iteration), so this is the number that decides end-to-end
runtime.  Both backends must agree to roundoff; the script asserts it.
"""

import argparse
import importlib
import time

import numpy as np

from cyllab import _kernels_py
from cyllab.solver import _quad_weights


def workload(S, M, N, seed=0):
    rng = np.random.default_rng(seed)
    h = 22.0 / (S - 1)
    a = -2.0 * np.pi * np.arange(M, dtype=float) * h
    E = np.exp(a)
    w = _quad_weights(a, h)
    rhs = (rng.standard_normal((S, M, N)) + 1j * rng.standard_normal((S, M, N)))
    u0 = rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))
    return E, w, np.ascontiguousarray(rhs), np.ascontiguousarray(u0)


def run(impl, E, w, rhs, u0, repeats=3):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = impl.propagate_first_order(
            E, w["first"], w["interior"], w["last"], rhs, u0, 1.0
        )
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--s", type=int, default=8192)
    ap.add_argument("--modes", type=int, default=64)
    ap.add_argument("--dim", type=int, default=2)
    args = ap.parse_args()

    E, w, rhs, u0 = workload(args.s, args.modes, args.dim)
    t_py, out_py = run(_kernels_py, E, w, rhs, u0)
    print(f"python fallback : {t_py * 1e3:9.2f} ms  (S={args.s}, M={args.modes}, N={args.dim})")

    try:
        _kernels_c = importlib.import_module("cyllab._kernels")
    except ImportError:
        print("compiled kernel : not available (build with pip install -e .)")
        return
    t_c, out_c = run(_kernels_c, E, w, rhs, u0)
    diff = np.max(np.abs(out_py - out_c))
    assert diff < 1e-12, f"backend mismatch: {diff}"
    print(f"compiled kernel : {t_c * 1e3:9.2f} ms")
    print(f"speedup         : {t_py / t_c:9.1f} x   (max |diff| = {diff:.2e})")


if __name__ == "__main__":
    main()
