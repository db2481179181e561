"""Random scenario generation.

Each draw produces a complete Scenario: shared cycle, per-intersection
offsets and ring splits, driver population, Poisson demand rates, and a
turn-ratio table in either a field-like ('real') or Dirichlet
('random') mode.  Splits are sampled so that both rings tile the cycle
and meet at the barrier; a phase's effective (max) green equals its
assigned split, with a common minimum green as the lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .types import CorridorSpec, DemandSpec, DrivingBehavior, Scenario, TimingPlan

MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class SamplerRanges:
    """Uniform sampling bounds for scenario generation."""

    cycle: tuple = (150, 240)  # integer seconds
    accel: tuple = (1.6, 3.6)
    decel: tuple = (3.0, 6.0)
    emergency_decel: tuple = (6.0, 12.0)
    min_gap: tuple = (1.0, 4.0)
    sigma: tuple = (0.1, 1.0)
    tau: tuple = (0.1, 3.0)
    lc_strategic: tuple = (0.1, 3.0)
    lc_cooperative: tuple = (0.1, 1.0)
    lc_speed_gain: tuple = (0.1, 3.0)
    speed_factor_mean: tuple = (1.0, 1.5)
    speed_factor_std: tuple = (0.1, 2.0)
    segment_length: tuple = (250.0, 600.0)  # >= one red phase of queue storage
    # Keep the bulk of scenarios near or below through-phase capacity
    # (roughly 580 veh/h for the mean sampled plan); oversaturating most
    # runs drowns the timing/demand signal in unbounded queue noise.
    demand_entry: tuple = (80.0, 300.0)
    demand_side: tuple = (20.0, 100.0)
    arterial_share: tuple = (0.30, 0.75)  # cycle fraction ahead of the barrier
    through_share: tuple = (0.40, 0.90)  # arterial green going to the through phase
    min_green: float = 5.0
    yellow: float = 4.0
    all_red: float = 2.0


DEFAULT_RANGES = SamplerRanges()


def _uniform(rng, lohi):
    return float(rng.uniform(lohi[0], lohi[1]))


def _sample_plan(rng, ranges, cycle):
    slot = ranges.yellow + ranges.all_red
    two_side = 2.0 * slot + 2.0 * ranges.min_green
    share_lo = max(ranges.arterial_share[0], two_side / cycle)
    share_hi = min(ranges.arterial_share[1], 1.0 - two_side / cycle)
    if share_lo >= share_hi:
        raise ConfigError(
            f"no feasible barrier split for cycle {cycle}s with "
            f"min green {ranges.min_green}s"
        )
    barrier_t = rng.uniform(share_lo, share_hi) * cycle
    greens = [0.0] * 8
    for side_greens, phases in (
        (barrier_t - 2.0 * slot, ((2, 1), (6, 5))),
        (cycle - barrier_t - 2.0 * slot, ((3, 4), (7, 8))),
    ):
        for major, minor in phases:
            g_major = ranges.min_green + _uniform(rng, ranges.through_share) * (
                side_greens - 2.0 * ranges.min_green
            )
            greens[major - 1] = g_major
            greens[minor - 1] = side_greens - g_major
    return TimingPlan(
        cycle=float(cycle),
        offset=float(rng.uniform(0.0, cycle)),
        greens=tuple(greens),
        min_green=(ranges.min_green,) * 8,
        max_green=tuple(greens),
        yellow=ranges.yellow,
        all_red=ranges.all_red,
        ring1=(1, 2, 3, 4),
        ring2=(5, 6, 7, 8),
    )


def _real_trio(rng, base):
    trio = np.array(base) + rng.uniform(-0.04, 0.04, size=3)
    trio = np.maximum(trio, 0.01)
    return trio / trio.sum()


def _sample_turn_row(rng, mode):
    """12 ratios: (L, T, R) for approaches E, W, N, S."""
    row = []
    for approach in range(4):
        corridor_approach = approach < 2
        if mode == "real":
            base = (0.08, 0.87, 0.05) if corridor_approach else (0.25, 0.50, 0.25)
            trio = _real_trio(rng, base)
        elif mode == "random":
            # Arterial approaches stay through-heavy even in random mode:
            # corridor journeys need THROUGH at every intersection, and a
            # flat simplex starves the travel-time targets of samples.
            alpha = (1.0, 12.0, 1.0) if corridor_approach else (1.0, 1.0, 1.0)
            trio = rng.dirichlet(alpha)
        else:
            raise ConfigError(f"unknown tmc mode {mode!r}")
        row.extend(float(x) for x in trio)
    return tuple(row)


def sample_scenario(rng, ranges=DEFAULT_RANGES, k=8, duration=1200.0,
                    tmc_mode="real", scenario_id="", seed=None) -> Scenario:
    """Draw one scenario; raises ConfigError if the ranges are infeasible."""
    last_err = None
    for _ in range(MAX_ATTEMPTS):
        try:
            return _sample_once(rng, ranges, k, duration, tmc_mode, scenario_id, seed)
        except ConfigError as err:
            last_err = err
    raise ConfigError(
        f"could not sample a feasible scenario in {MAX_ATTEMPTS} attempts: {last_err}"
    )


def _sample_once(rng, ranges, k, duration, tmc_mode, scenario_id, seed):
    cycle = float(rng.integers(ranges.cycle[0], ranges.cycle[1] + 1))
    corridor = CorridorSpec(
        n_intersections=k,
        segment_lengths=tuple(
            _uniform(rng, ranges.segment_length) for _ in range(k - 1)
        ),
    )
    plans = tuple(_sample_plan(rng, ranges, cycle) for _ in range(k))
    decel = _uniform(rng, ranges.decel)
    behavior = DrivingBehavior(
        accel=_uniform(rng, ranges.accel),
        decel=decel,
        emergency_decel=float(rng.uniform(max(ranges.emergency_decel[0], decel),
                                          ranges.emergency_decel[1])),
        min_gap=_uniform(rng, ranges.min_gap),
        sigma=_uniform(rng, ranges.sigma),
        tau=_uniform(rng, ranges.tau),
        lc_strategic=_uniform(rng, ranges.lc_strategic),
        lc_cooperative=_uniform(rng, ranges.lc_cooperative),
        lc_speed_gain=_uniform(rng, ranges.lc_speed_gain),
        speed_factor_mean=_uniform(rng, ranges.speed_factor_mean),
        speed_factor_std=_uniform(rng, ranges.speed_factor_std),
    )
    demand = DemandSpec(
        east=_uniform(rng, ranges.demand_entry),
        west=_uniform(rng, ranges.demand_entry),
        side=_uniform(rng, ranges.demand_side),
    )
    turn_ratios = tuple(_sample_turn_row(rng, tmc_mode) for _ in range(k))
    scenario = Scenario(
        corridor=corridor,
        plans=plans,
        behavior=behavior,
        demand=demand,
        turn_ratios=turn_ratios,
        seed=int(rng.integers(0, 2**63)) if seed is None else int(seed),
        duration=float(duration),
        scenario_id=scenario_id,
    )
    scenario.validate()
    return scenario
