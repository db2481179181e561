"""Hand-built corridor fixtures shared by the simulation tests.

Plans are assembled from explicit per-phase greens so the cycle length
is always the exact ring sum; scenarios default to through-only turn
ratios and zero side demand, which individual tests override.
"""

import numpy as np

from artery.sim.types import (
    CorridorSpec,
    DemandSpec,
    DrivingBehavior,
    Scenario,
    TimingPlan,
)


def make_plan(
    g_art_through=40.0,
    g_art_left=10.0,
    g_cross_through=25.0,
    g_cross_left=10.0,
    offset=0.0,
    yellow=4.0,
    all_red=2.0,
    min_green=0.0,
    ring1=(1, 2, 3, 4),
    ring2=(5, 6, 7, 8),
):
    greens = [0.0] * 8
    greens[1] = greens[5] = g_art_through   # phases 2, 6
    greens[0] = greens[4] = g_art_left      # phases 1, 5
    greens[3] = greens[7] = g_cross_through  # phases 4, 8
    greens[2] = greens[6] = g_cross_left    # phases 3, 7
    slot = yellow + all_red
    cycle = sum(greens[p - 1] + slot for p in ring1)
    return TimingPlan(
        cycle=cycle,
        offset=offset % cycle,
        greens=tuple(greens),
        min_green=(min_green,) * 8,
        max_green=tuple(greens),
        yellow=yellow,
        all_red=all_red,
        ring1=ring1,
        ring2=ring2,
    )


DEFAULT_BEHAVIOR = DrivingBehavior(
    accel=2.6,
    decel=4.5,
    emergency_decel=9.0,
    min_gap=2.5,
    sigma=0.5,
    tau=1.0,
    lc_strategic=1.0,
    lc_cooperative=1.0,
    lc_speed_gain=1.0,
    speed_factor_mean=1.0,
    speed_factor_std=0.1,
)

THROUGH_ONLY_ROW = (0.0, 1.0, 0.0) * 4


def make_scenario(
    k=4,
    segment_length=400.0,
    east=200.0,
    west=200.0,
    side=0.0,
    seed=7,
    duration=900.0,
    behavior=DEFAULT_BEHAVIOR,
    turn_row=THROUGH_ONLY_ROW,
    offsets=None,
    scenario_id="test",
    **plan_kw,
):
    corridor = CorridorSpec(
        n_intersections=k, segment_lengths=(segment_length,) * (k - 1)
    )
    if offsets is None:
        offsets = [0.0] * k
    plans = tuple(make_plan(offset=off, **plan_kw) for off in offsets)
    scenario = Scenario(
        corridor=corridor,
        plans=plans,
        behavior=behavior,
        demand=DemandSpec(east=east, west=west, side=side),
        turn_ratios=(turn_row,) * k,
        seed=seed,
        duration=duration,
        scenario_id=scenario_id,
    )
    scenario.validate()
    return scenario


def quiet_behavior(**overrides):
    """Deterministic driver population: no dawdling, uniform speed."""
    fields = dict(
        accel=2.6,
        decel=4.5,
        emergency_decel=9.0,
        min_gap=2.5,
        sigma=0.0,
        tau=1.0,
        lc_strategic=1.0,
        lc_cooperative=1.0,
        lc_speed_gain=1.0,
        speed_factor_mean=1.0,
        speed_factor_std=0.0,
    )
    fields.update(overrides)
    return DrivingBehavior(**fields)
