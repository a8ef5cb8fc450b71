"""Benchmark the JIT-compiled kernels against the pure NumPy fallback.

Usage:
    python benchmarks/bench_kernels.py [--cells 90000] [--repeat 7]

The CPT field kernel is compared in-process (both implementations are
importable); the end-to-end rows re-run this script in a subprocess
with RISKCBF_DISABLE_NUMBA=1 to exercise the env-flag fallback path.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from riskcbf import _kernels as K
from riskcbf.risk import CPT
from riskcbf.sim import run, single_obstacle_scenario


def time_call(func, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        func()
        best = min(best, time.perf_counter() - start)
    return best


def bench_grid(cells: int, repeat: int) -> dict:
    rng = np.random.default_rng(0)
    mu = rng.uniform(0.5, 200.0, cells)
    sigma = rng.uniform(0.0, 40.0, cells)
    g = K.trunc_gauss_grid_coeffs(10)
    pi = K.decision_weights_kernel(K.trunc_gauss_bin_probs(10), 0.74, 1.0)

    results = {}
    results["numpy"] = time_call(lambda: K.cpt_grid_numpy(mu, sigma, g, pi, 0.88, 2.25), repeat)
    if K.cpt_grid_numba is not None:
        K.cpt_grid_numba(mu[:4], sigma[:4], g, pi, 0.88, 2.25)  # compile
        results["numba"] = time_call(
            lambda: K.cpt_grid_numba(mu, sigma, g, pi, 0.88, 2.25), repeat
        )
    return results


def bench_lottery_batch(repeat: int, n: int = 20_000, m: int = 16) -> float:
    rng = np.random.default_rng(1)
    outcomes = np.sort(rng.uniform(0.0, 200.0, (n, m)), axis=1)
    probs = rng.dirichlet(np.ones(m), size=n)

    def evaluate():
        total = 0.0
        for k in range(n):
            total += K.cpt_lottery_kernel(outcomes[k], probs[k], 0.74, 1.0, 0.88, 2.25)
        return total

    evaluate()  # warm/compile
    return time_call(evaluate, repeat)


def bench_sim(repeat: int) -> float:
    spec = CPT(0.74, 1.0, 0.88, 2.5)
    run(single_obstacle_scenario(spec, t_max=10.0))  # warm
    return time_call(lambda: run(single_obstacle_scenario(spec)), repeat)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--cells", type=int, default=90_000)
    parser.add_argument("--repeat", type=int, default=7)
    parser.add_argument("--json", action="store_true", help="emit machine-readable results")
    args = parser.parse_args()

    K.warmup()
    grid = bench_grid(args.cells, args.repeat)
    lottery = bench_lottery_batch(max(1, args.repeat // 2))
    sim = bench_sim(args.repeat)
    payload = {
        "numba_enabled": K.NUMBA_ENABLED,
        "grid": grid,
        "lottery_batch": lottery,
        "sim_run": sim,
    }

    if args.json:
        print(json.dumps(payload))
        return 0

    print(f"numba enabled: {K.NUMBA_ENABLED}")
    print(f"CPT field kernel, {args.cells} cells (best of {args.repeat}):")
    for name, seconds in grid.items():
        print(f"  {name:6s}: {seconds * 1e3:8.2f} ms")
    if "numba" in grid:
        print(f"  speedup numba/numpy: {grid['numpy'] / grid['numba']:.1f}x")
    print(f"lottery batch (20k lotteries, m=16): {lottery * 1e3:8.2f} ms")
    print(f"closed-loop single-obstacle run: {sim * 1e3:8.2f} ms")

    if K.NUMBA_ENABLED:
        env = dict(os.environ, RISKCBF_DISABLE_NUMBA="1")
        proc = subprocess.run(
            [sys.executable, __file__, "--cells", str(args.cells), "--repeat",
             str(args.repeat), "--json"],
            capture_output=True,
            text=True,
            env=env,
        )
        if proc.returncode == 0:
            fallback = json.loads(proc.stdout)
            print("fallback path (RISKCBF_DISABLE_NUMBA=1):")
            print(f"  grid numpy: {fallback['grid']['numpy'] * 1e3:8.2f} ms")
            print(f"  lottery batch: {fallback['lottery_batch'] * 1e3:8.2f} ms "
                  f"({fallback['lottery_batch'] / lottery:.1f}x the numba path)")
            print(f"  closed-loop run: {fallback['sim_run'] * 1e3:8.2f} ms "
                  f"({fallback['sim_run'] / sim:.1f}x the numba path)")
        else:
            print("fallback subprocess failed:", proc.stderr.strip())
    return 0


if __name__ == "__main__":
    sys.exit(main())
