#!/usr/bin/env python3
"""Benchmark the compiled lane-step kernel against the pure-Python one.

Verifies first that every available kernel produces bit-identical
output on random lane states, then times the per-step update.  With
--scenario it also times one full simulation run per kernel in a
subprocess, since the kernel choice is fixed at import time.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from artery.sim.kernels import FREE_ROAD, available_kernels

DT = 0.5
PARAMS = dict(dt=DT, accel=2.6, decel=4.5, edecel=9.0,
              mingap=2.5, tau=1.0, sigma=0.5, veh_len=5.0)


def random_state(rng, n):
    gaps = rng.uniform(0.5, 60.0, size=n)
    pos = np.cumsum(gaps + 5.0)[::-1].copy()
    speed = rng.uniform(0.0, 18.0, size=n)
    speed[rng.random(n) < 0.2] = 0.0
    vmax = rng.uniform(8.0, 25.0, size=n)
    stop = np.where(
        rng.random(n) < 0.5, FREE_ROAD, pos + rng.uniform(-5.0, 80.0, size=n)
    )
    return pos, speed, vmax, stop


def run_kernel(kernel, pos, speed, vmax, stop, u_draws):
    pos = pos.copy()
    speed = speed.copy()
    pos_new = np.empty_like(pos)
    speed_new = np.empty_like(speed)
    n = pos.shape[0]
    for u in u_draws:
        kernel(pos, speed, pos_new, speed_new, vmax, u, stop, n, **PARAMS)
        pos, pos_new = pos_new, pos
        speed, speed_new = speed_new, speed
    return pos, speed


def verify(kernels, seed):
    rng = np.random.default_rng(seed)
    for _ in range(50):
        n = int(rng.integers(1, 50))
        pos, speed, vmax, stop = random_state(rng, n)
        u_draws = rng.random((20, n))
        results = {
            name: run_kernel(k, pos, speed, vmax, stop, u_draws)
            for name, k in kernels.items()
        }
        baseline = results["python"]
        for name, (p, v) in results.items():
            if not (np.array_equal(p, baseline[0])
                    and np.array_equal(v, baseline[1])):
                raise SystemExit(f"kernel {name!r} diverged from python")
    print(f"verified: {sorted(kernels)} agree bitwise on 50 random lanes",
          flush=True)


def bench(kernels, vehicles, steps, seed):
    rng = np.random.default_rng(seed)
    pos, speed, vmax, stop = random_state(rng, vehicles)
    u_draws = rng.random((steps, vehicles))
    timings = {}
    for name, kernel in kernels.items():
        t0 = time.perf_counter()
        run_kernel(kernel, pos, speed, vmax, stop, u_draws)
        timings[name] = time.perf_counter() - t0
    base = timings["python"]
    print(f"\nlane step, {vehicles} vehicles x {steps} steps:", flush=True)
    for name, elapsed in sorted(timings.items()):
        per = elapsed / (vehicles * steps) * 1e9
        print(
            f"  {name:>8}: {elapsed:8.3f} s  {per:8.1f} ns/vehicle-step"
            f"  ({base / elapsed:5.1f}x vs python)"
        )


SCENARIO_SNIPPET = """
import time
import numpy as np
from artery.sim.kernels import KERNEL_NAME
from artery.sim.sampler import sample_scenario
from artery.sim.engine import run_scenario

rng = np.random.default_rng(0)
scenario = sample_scenario(rng, k=8, duration=1800.0, scenario_id="bench", seed=1)
t0 = time.perf_counter()
log = run_scenario(scenario)
print(f"  {KERNEL_NAME:>8}: {time.perf_counter() - t0:8.3f} s "
      f"({log.spawned} vehicles)")
"""


def bench_scenario():
    # Flush so the header lands before the subprocess output.
    print("\nfull 1800s scenario run:", flush=True)
    for pure in ("0", "1"):
        env = dict(os.environ, ARTERY_PURE_PY=pure)
        subprocess.run([sys.executable, "-c", SCENARIO_SNIPPET],
                       env=env, check=True)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--vehicles", type=int, default=30)
    parser.add_argument("--steps", type=int, default=20000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--scenario", action="store_true",
                        help="also time one full simulation per kernel")
    args = parser.parse_args()
    kernels = available_kernels()
    if "compiled" not in kernels:
        print("warning: compiled kernel not importable, timing python only")
    verify(kernels, args.seed)
    bench(kernels, args.vehicles, args.steps, args.seed)
    if args.scenario:
        bench_scenario()


if __name__ == "__main__":
    main()
