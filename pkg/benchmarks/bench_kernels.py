"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--k 5] [--ny 3] [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from trialsearch.core import ProblemSpec, history_grid
from trialsearch.kernels import get_backend


def cases(k: int, ny: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    grid = history_grid(ProblemSpec(k, tuple(range(ny))))
    P = rng.dirichlet(np.ones(ny), size=(grid.n, k))
    values = np.arange(ny, dtype=np.float64)
    counts = rng.poisson(1.0, size=(grid.n, k, ny)).astype(np.float64)
    stop_ok = (rng.random(grid.n) < 0.3).astype(np.uint8)
    stop_reward = np.zeros(grid.n)
    return {
        "rho_exact": lambda m: m.rho_exact_table(P, values, grid.slot, grid.best, grid.stride, 0.0, False),
        "rho_exact_avg": lambda m: m.rho_exact_table(P, values, grid.slot, grid.best, grid.stride, 0.0, True),
        "rho_upper": lambda m: m.rho_bound_table(P, values, grid.slot, grid.best, 0.0, True),
        "backward": lambda m: m.backward_induction(P, -1.0, stop_reward, stop_ok, grid.slot, grid.stride),
        "smooth_hist": lambda m: m.smooth_table(counts, 0.1, True, grid.slot, grid.size, grid.stride),
    }, grid.n


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--ny", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    py = get_backend("python")
    try:
        cy = get_backend("cython")
    except ImportError:
        cy = None
        print("compiled extension not built; timing the numpy fallback only")
    fns, n = cases(args.k, args.ny)
    print(f"k={args.k} n_y={args.ny} histories={n}")
    print(f"{'kernel':<15}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in fns.items():
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        if cy is None:
            print(f"{name:<15}{t_py:>12.3f}")
            continue
        t_cy = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<15}{t_py:>12.3f}{t_cy:>12.3f}{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()
