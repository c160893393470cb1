"""Benchmark the compiled kernels against the pure-Python fallback.

Run with:  python benchmarks/bench_engines.py
"""

import time

import numpy as np

from jsqguard.model import Grid, SystemParams, successor_tables, uniformize

try:
    from jsqguard import _kernels
except ImportError:
    _kernels = None
from jsqguard import _pykernels

REPEAT = 3


def best_of(fn, repeat=REPEAT):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_rel_sweeps(engine, grid, params, sweeps=200):
    tab = successor_tables(grid)
    uni = uniformize(params)
    args = (tab.down, tab.up, tab.upmin, tab.norm1, params.p,
            uni.lambda_tilde, uni.mu_tilde,
            params.fault_prob * uni.lambda_tilde, params.protect_cost)
    J = np.zeros(grid.size)

    def run():
        for _ in range(sweeps):
            engine.rel_sweep_inplace(J, *args)

    return best_of(run)


def bench_shapley_sweeps(engine, grid, params, sweeps=200):
    tab = successor_tables(grid)
    uni = uniformize(params)
    args = (tab.down, tab.upmin, tab.upmax, tab.norm1,
            uni.lambda_tilde, uni.mu_tilde, params.attack_cost,
            params.protect_cost)
    V = np.zeros(grid.size)

    def run():
        for _ in range(sweeps):
            engine.shapley_sweep_inplace(V, *args)

    return best_of(run)


def bench_simulate(engine, grid, params, horizon=20_000.0):
    strides = np.asarray(grid.strides, dtype=np.int64)
    bprobs = np.zeros(grid.size)
    aprobs = np.zeros(grid.size)
    x0 = np.zeros(params.n, dtype=np.int64)
    weights = np.ones(params.n)

    def run():
        bg = np.random.PCG64(np.random.SeedSequence([1, 0]))
        engine.simulate(bg, params.n, params.lam, params.mu, params.gamma,
                        0, params.fault_prob, params.protect_cost,
                        params.attack_cost, params.p, bprobs, aprobs,
                        grid.bound, strides, 1, weights, x0,
                        horizon, 0.1, 0, 1, 0)

    return best_of(run)


def main():
    params = SystemParams(n=2, lam=1.6, mu=1.0, gamma=1.0, protect_cost=0.05,
                          fault_prob=0.5, routing_probs=(0.1, 0.9))
    grid = Grid(n=2, bound=40)
    cases = [
        ("protection sweeps (41^2 states x 200)", bench_rel_sweeps),
        ("minimax sweeps   (41^2 states x 200)", bench_shapley_sweeps),
        ("simulation       (~70k events)", bench_simulate),
    ]
    print(f"{'kernel':<38}{'python':>12}{'compiled':>12}{'speedup':>10}")
    for name, bench in cases:
        t_py = bench(_pykernels, grid, params)
        if _kernels is None:
            print(f"{name:<38}{t_py:>11.3f}s{'n/a':>12}{'n/a':>10}")
            continue
        t_c = bench(_kernels, grid, params)
        print(f"{name:<38}{t_py:>11.3f}s{t_c:>11.3f}s{t_py / t_c:>9.1f}x")
    if _kernels is None:
        print("\ncompiled extension not built; run `pip install -e .` first")


if __name__ == "__main__":
    main()
