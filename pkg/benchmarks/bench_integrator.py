#!/usr/bin/env python3
"""Benchmark: compiled stepping kernel vs the pure-Python driver.

Runs the benchmark heavy-ball workload at several masses with both
backends, reports wall time, accepted steps per second, and the terminal
state disagreement.  Force the pure path from the outside with
HEAVYBALL_LAB_PURE=1 to sanity-check the selection logic itself.

Usage: python benchmarks/bench_integrator.py [--horizon T]
"""
import argparse
import os
import time

import numpy as np

from heavyball_lab import _backend
from heavyball_lab.dynamics import HeavyBallProblem, simulate
from heavyball_lab.objectives import xy_objective


def run_once(problem, horizon, pure):
    if pure:
        os.environ["HEAVYBALL_LAB_PURE"] = "1"
    else:
        os.environ.pop("HEAVYBALL_LAB_PURE", None)
    t0 = time.perf_counter()
    traj = simulate(problem, t_end=horizon, rel_tol=1e-10, abs_tol=1e-12)
    dt = time.perf_counter() - t0
    return traj, dt


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--horizon", type=float, default=20.0)
    args = ap.parse_args()

    if not _backend.compiled_available():
        print("compiled kernel not available; nothing to compare")
        return

    obj = xy_objective()
    print(f"{'epsilon':>9} {'steps':>8} {'compiled':>10} {'pure':>10} "
          f"{'speedup':>8} {'max |diff|':>12}")
    for eps in (0.1, 0.01, 0.001):
        problem = HeavyBallProblem(obj, epsilon=eps, gamma=0.5,
                                   x0=np.array([1.0, -1.0]),
                                   v0=np.array([0.1, 0.1]))
        tr_c, dt_c = run_once(problem, args.horizon, pure=False)
        tr_p, dt_p = run_once(problem, args.horizon, pure=True)
        os.environ.pop("HEAVYBALL_LAB_PURE", None)
        diff = float(np.max(np.abs(tr_c.states[-1] - tr_p.states[-1])))
        assert len(tr_c.times) == len(tr_p.times), "drivers diverged"
        print(f"{eps:9g} {len(tr_c.times):8d} {dt_c:9.4f}s {dt_p:9.4f}s "
              f"{dt_p / dt_c:7.1f}x {diff:12.3e}")


if __name__ == "__main__":
    main()
