"""Corridor microsimulation engine.

One run advances two independent single-lane car-following streams
(eastbound, westbound) in fixed 0.5 s steps, plus point queues on the
side-street approaches.  Side vehicles either cross the arterial and
leave, or turn onto it and become corridor vehicles mid-route.

Determinism: one numpy Generator seeded from the scenario drives every
random draw in a fixed order (arrival schedules with per-vehicle speed
factors and turn uniforms up front, then one dawdle vector per lane per
step), so identical (scenario, seed) pairs give bit-identical logs
regardless of which step kernel is active.
"""

from __future__ import annotations

import logging

import numpy as np

from ..errors import ConfigError, GridlockError
from . import kernels
from .signals import SignalSchedule
from .types import (
    DT,
    LEFT,
    RIGHT,
    THROUGH,
    VEHICLE_LENGTH,
    Scenario,
    SimulationLog,
    VehicleRecord,
)

log = logging.getLogger(__name__)

FREE_ROAD = kernels.FREE_ROAD
STOP_STANDOFF = 0.5

# Discharge headway for side-street point queues (s).
SAT_HEADWAY = 2.0

# Injected vehicles appear this far past the stop line (m).
INJECT_CLEAR = 20.0

# Detectors never sit closer to the upstream stop line than this (m),
# so injected vehicles still pass them.
DET_STANDOFF = 25.0

# Required clearance (beyond min_gap + length) for spawns and injections (m).
ENTRY_MARGIN = 0.5

# Abort when nothing has moved for this many cycles while vehicles remain.
GRIDLOCK_CYCLES = 10

# Phase serving each movement, per corridor direction: index THROUGH/LEFT/RIGHT.
PHASE_FOR = {
    "E": (2, 5, 2),
    "W": (6, 1, 6),
    "N": (8, 3, 8),
    "S": (4, 7, 4),
}

# Side-street movements that enter the corridor, and the direction they join.
SIDE_JOINS = {
    ("N", LEFT): "W",
    ("N", RIGHT): "E",
    ("S", LEFT): "E",
    ("S", RIGHT): "W",
}

APPROACH_COL = {"E": 0, "W": 3, "N": 6, "S": 9}


class _Lane:
    """Parallel per-vehicle arrays for one corridor direction."""

    def __init__(self, n_nodes):
        self.n_nodes = n_nodes
        self.pos = np.empty(0)
        self.speed = np.empty(0)
        self.vmax = np.empty(0)
        self.next_stop = np.empty(0, dtype=np.int64)
        self.next_det = np.empty(0, dtype=np.int64)
        self.movement = np.empty(0, dtype=np.int64)
        self.committed = np.empty(0, dtype=bool)
        self.turn_u = np.empty((0, n_nodes))
        self.records = []

    @property
    def n(self):
        return self.pos.shape[0]

    def insert(self, idx, pos, speed, vmax, next_idx, turn_u, record):
        self.pos = np.insert(self.pos, idx, pos)
        self.speed = np.insert(self.speed, idx, speed)
        self.vmax = np.insert(self.vmax, idx, vmax)
        self.next_stop = np.insert(self.next_stop, idx, next_idx)
        self.next_det = np.insert(self.next_det, idx, next_idx)
        self.movement = np.insert(self.movement, idx, THROUGH)
        self.committed = np.insert(self.committed, idx, False)
        self.turn_u = np.insert(self.turn_u, idx, turn_u, axis=0)
        self.records.insert(idx, record)

    def remove(self, drop_mask):
        keep = ~drop_mask
        self.pos = self.pos[keep]
        self.speed = self.speed[keep]
        self.vmax = self.vmax[keep]
        self.next_stop = self.next_stop[keep]
        self.next_det = self.next_det[keep]
        self.movement = self.movement[keep]
        self.committed = self.committed[keep]
        self.turn_u = self.turn_u[keep]
        self.records = [r for r, k in zip(self.records, keep) if k]


class _Geometry:
    """Travel-order coordinates per direction."""

    def __init__(self, corridor):
        k = corridor.n_intersections
        segs = list(corridor.segment_lengths)
        self.node_order = {
            "E": np.arange(k, dtype=np.int64),
            "W": np.arange(k - 1, -1, -1, dtype=np.int64),
        }
        stop_e = [corridor.entry_length]
        for s in segs:
            stop_e.append(stop_e[-1] + s)
        stop_w = [corridor.entry_length]
        for s in reversed(segs):
            stop_w.append(stop_w[-1] + s)
        self.stop_x = {"E": np.array(stop_e), "W": np.array(stop_w)}
        self.det_x = {}
        clamped = []
        for d in ("E", "W"):
            approach = [corridor.entry_length] + (segs if d == "E" else segs[::-1])
            det = []
            for m, avail in enumerate(approach):
                setback = corridor.detector_setback
                if setback > avail - DET_STANDOFF:
                    setback = max(avail - DET_STANDOFF, 1.0)
                    clamped.append((d, int(self.node_order[d][m])))
                det.append(self.stop_x[d][m] - setback)
            self.det_x[d] = np.array(det)
        if clamped:
            log.warning(
                "detector setback clamped to the approach length at %s", clamped
            )

    def travel_index(self, d, node):
        return node if d == "E" else self.node_order["E"].shape[0] - 1 - node


def _sample_movement(trio, u):
    if u < trio[0]:
        return LEFT
    if u < trio[0] + trio[1]:
        return THROUGH
    return RIGHT


def _arrival_times(rng, rate_veh_h, duration):
    times = []
    if rate_veh_h <= 0:
        return times
    scale = 3600.0 / rate_veh_h
    t = rng.exponential(scale)
    while t < duration:
        times.append(t)
        t += rng.exponential(scale)
    return times


def _speed_factor(rng, behavior):
    f = rng.normal(behavior.speed_factor_mean, behavior.speed_factor_std)
    return float(np.clip(f, 0.5, 2.0))


def _phase_cubes(scenario, n_steps, hold_green):
    """(green, yellow) boolean arrays of shape (n_steps, K, 8)."""
    k = scenario.corridor.n_intersections
    green = np.zeros((n_steps, k, 8), dtype=bool)
    yellow = np.zeros((n_steps, k, 8), dtype=bool)
    if hold_green:
        green[:] = True
        return green, yellow
    t = np.arange(n_steps) * DT
    for ki, plan in enumerate(scenario.plans):
        sched = SignalSchedule(plan)
        tloc = (t - plan.offset) % plan.cycle
        for intervals in sched.rings:
            for start, end, phase, state in intervals:
                if end <= start:
                    continue
                mask = (tloc >= start) & (tloc < end)
                if state == 0:
                    green[mask, ki, phase - 1] = True
                elif state == 1:
                    yellow[mask, ki, phase - 1] = True
    return green, yellow


def run_scenario(scenario: Scenario, *, hold_signals_green=False,
                 collect_gaps=False) -> SimulationLog:
    """Run one scenario to completion and return its log."""
    scenario.validate()
    corridor = scenario.corridor
    behavior = scenario.behavior
    k = corridor.n_intersections
    geom = _Geometry(corridor)
    rng = np.random.default_rng(scenario.seed)
    n_steps = int(round(scenario.duration / DT))
    limit = corridor.speed_limit
    # The safe-speed rule needs at least one timestep of reaction lag.
    tau_eff = max(behavior.tau, DT)
    turn_table = [list(row) for row in scenario.turn_ratios]

    # --- pre-drawn randomness ------------------------------------------------
    entry_arrivals = {}
    for d, rate in (("E", scenario.demand.east), ("W", scenario.demand.west)):
        sched = []
        for t_a in _arrival_times(rng, rate, scenario.duration):
            sched.append((t_a, _speed_factor(rng, behavior), rng.random(k)))
        entry_arrivals[d] = sched
    side_arrivals = {}
    for node in range(k):
        for side in ("N", "S"):
            sched = []
            for t_a in _arrival_times(rng, scenario.demand.side, scenario.duration):
                factor = _speed_factor(rng, behavior)
                trio = turn_table[node][APPROACH_COL[side] : APPROACH_COL[side] + 3]
                movement = _sample_movement(trio, rng.random())
                sched.append((t_a, factor, movement, rng.random(k)))
            side_arrivals[(node, side)] = sched

    green_cube, yellow_cube = _phase_cubes(scenario, n_steps, hold_signals_green)

    lanes = {"E": _Lane(k), "W": _Lane(k)}
    side_queues = {key: [] for key in side_arrivals}
    side_cursor = {key: 0 for key in side_arrivals}
    entry_cursor = {"E": 0, "W": 0}
    entry_pending = {"E": [], "W": []}
    last_discharge = {key: -1e18 for key in side_arrivals}

    events = []
    all_records = []
    spawned = 0
    exited = 0
    vid_counter = 0
    last_motion_t = 0.0
    min_gap_seen = np.inf
    gridlock_horizon = GRIDLOCK_CYCLES * scenario.cycle

    def new_vid():
        nonlocal vid_counter
        vid_counter += 1
        return vid_counter - 1

    phase_for = {d: np.array(PHASE_FOR[d], dtype=np.int64) for d in ("E", "W")}

    for step in range(n_steps):
        t = step * DT
        moved = False
        green_now = green_cube[step]
        yellow_now = yellow_cube[step]

        # --- corridor lanes --------------------------------------------------
        for d in ("E", "W"):
            lane = lanes[d]
            n = lane.n
            if n == 0:
                continue
            stops = geom.stop_x[d]
            dets = geom.det_x[d]
            order = geom.node_order[d]

            m = lane.next_stop
            m_cl = np.minimum(m, k - 1)
            active = m < k
            node = order[m_cl]
            phase = phase_for[d][lane.movement]
            is_green = green_now[node, phase - 1]
            is_yellow = yellow_now[node, phase - 1]
            line = stops[m_cl]
            # Commit vehicles that can no longer stop comfortably at yellow.
            need = lane.speed * lane.speed / (2.0 * behavior.decel)
            newly = active & ~is_green & is_yellow & (need > line - lane.pos - STOP_STANDOFF)
            lane.committed |= newly
            go = ~active | is_green | lane.committed
            stop_arr = np.where(go, FREE_ROAD, line)

            u = rng.random(n) if behavior.sigma > 0.0 else np.zeros(n)
            pos_old = lane.pos.copy()
            speed_old = lane.speed.copy()
            kernels.step_lane(
                pos_old, speed_old, lane.pos, lane.speed, lane.vmax, u,
                stop_arr, n, DT, behavior.accel, behavior.decel,
                behavior.emergency_decel, behavior.min_gap, tau_eff,
                behavior.sigma, VEHICLE_LENGTH,
            )
            if np.any(lane.pos != pos_old):
                moved = True
            if collect_gaps and n > 1:
                gaps = pos_old[:-1] - VEHICLE_LENGTH - pos_old[1:]
                min_gap_seen = min(min_gap_seen, float(gaps.min()))

            # Detector crossings (movement gets decided here).
            dm = lane.next_det
            dm_cl = np.minimum(dm, k - 1)
            dpos = dets[dm_cl]
            crossed = (dm < k) & (lane.pos >= dpos) & (pos_old < dpos)
            for i in np.nonzero(crossed)[0]:
                node_i = int(order[dm[i]])
                col = APPROACH_COL[d]
                trio = turn_table[node_i][col : col + 3]
                mv = _sample_movement(trio, lane.turn_u[i, node_i])
                lane.movement[i] = mv
                t_evt = t + DT * (dpos[i] - pos_old[i]) / (lane.pos[i] - pos_old[i])
                events.append((float(t_evt), node_i, int(phase_for[d][mv])))
                lane.next_det[i] += 1

            # Stop-line crossings.
            sm = lane.next_stop
            sx = stops[np.minimum(sm, k - 1)]
            crossed = (sm < k) & (lane.pos >= sx) & (pos_old < sx)
            drop = np.zeros(n, dtype=bool)
            for i in np.nonzero(crossed)[0]:
                node_i = int(order[sm[i]])
                t_evt = float(t + DT * (sx[i] - pos_old[i]) / (lane.pos[i] - pos_old[i]))
                rec = lane.records[i]
                if sm[i] == 0:
                    rec.entry_t = t_evt
                lane.committed[i] = False
                if lane.movement[i] != THROUGH:
                    rec.removed_at_node = node_i
                    drop[i] = True
                    exited += 1
                elif sm[i] == k - 1:
                    rec.exit_t = t_evt
                    drop[i] = True
                    exited += 1
                else:
                    lane.next_stop[i] += 1
            if drop.any():
                lane.remove(drop)
                moved = True

        # --- side-street point queues ----------------------------------------
        for node in range(k):
            for side in ("N", "S"):
                key = (node, side)
                sched = side_arrivals[key]
                cur = side_cursor[key]
                while cur < len(sched) and sched[cur][0] <= t:
                    t_a, factor, movement, turn_u = sched[cur]
                    cur += 1
                    vid = new_vid()
                    phase = PHASE_FOR[side][movement]
                    events.append((float(t_a), node, int(phase)))
                    rec = VehicleRecord(
                        vid=vid, kind="side", direction=side, origin_node=node,
                        spawn_t=float(t_a), speed_factor=factor,
                    )
                    all_records.append(rec)
                    ready = t_a + corridor.detector_setback / (limit * factor)
                    side_queues[key].append((ready, movement, factor, turn_u, rec))
                    spawned += 1
                    moved = True
                side_cursor[key] = cur

                q = side_queues[key]
                if not q:
                    continue
                ready, movement, factor, turn_u, rec = q[0]
                phase = PHASE_FOR[side][movement]
                if (
                    ready <= t
                    and green_now[node, phase - 1]
                    and t - last_discharge[key] >= SAT_HEADWAY
                ):
                    join = SIDE_JOINS.get((side, movement))
                    if join is not None and geom.travel_index(join, node) + 1 >= k:
                        # Joins the corridor past its last intersection,
                        # i.e. leaves the modelled section immediately.
                        join = None
                    if join is None:
                        # Crosses the arterial and leaves the network.
                        q.pop(0)
                        last_discharge[key] = t
                        exited += 1
                        moved = True
                    else:
                        lane = lanes[join]
                        mt = geom.travel_index(join, node)
                        x = geom.stop_x[join][mt] + INJECT_CLEAR
                        idx = int(np.searchsorted(-lane.pos, -x, side="left"))
                        clearance = VEHICLE_LENGTH + behavior.min_gap + ENTRY_MARGIN
                        ok_lead = idx == 0 or lane.pos[idx - 1] - x >= clearance
                        ok_follow = idx >= lane.n or x - lane.pos[idx] >= clearance
                        if ok_lead and ok_follow:
                            q.pop(0)
                            last_discharge[key] = t
                            rec.direction = join
                            lane.insert(
                                idx, x, min(limit * factor, 0.5 * limit),
                                limit * factor, mt + 1, turn_u, rec,
                            )
                            moved = True

        # --- corridor entries -------------------------------------------------
        for d in ("E", "W"):
            sched = entry_arrivals[d]
            cur = entry_cursor[d]
            while cur < len(sched) and sched[cur][0] <= t:
                entry_pending[d].append(sched[cur])
                cur += 1
            entry_cursor[d] = cur
            if not entry_pending[d]:
                continue
            lane = lanes[d]
            clearance = VEHICLE_LENGTH + behavior.min_gap + ENTRY_MARGIN
            if lane.n == 0 or lane.pos[-1] >= clearance:
                t_a, factor, turn_u = entry_pending[d].pop(0)
                vmax = limit * factor
                if lane.n == 0:
                    speed = vmax
                else:
                    gap = lane.pos[-1] - VEHICLE_LENGTH - behavior.min_gap
                    vl = lane.speed[-1]
                    vsafe = vl + (gap - vl * tau_eff) / (
                        (vmax + vl) / (2.0 * behavior.decel) + tau_eff
                    )
                    speed = float(np.clip(vsafe, 0.0, vmax))
                vid = new_vid()
                rec = VehicleRecord(
                    vid=vid, kind="corridor", direction=d, origin_node=-1,
                    spawn_t=float(t), speed_factor=factor,
                )
                all_records.append(rec)
                lane.insert(lane.n, 0.0, speed, vmax, 0, turn_u, rec)
                spawned += 1
                moved = True

        # --- gridlock watchdog ------------------------------------------------
        if moved:
            last_motion_t = t
        else:
            occupied = (
                lanes["E"].n or lanes["W"].n
                or any(side_queues[q2] for q2 in side_queues)
            )
            if occupied and t - last_motion_t > gridlock_horizon:
                raise GridlockError(
                    f"no movement since t={last_motion_t:.1f}s "
                    f"(now t={t:.1f}s, horizon {gridlock_horizon:.0f}s)"
                )

    events.sort(key=lambda e: (e[0], e[1], e[2]))
    remaining = (
        lanes["E"].n + lanes["W"].n + sum(len(q) for q in side_queues.values())
    )
    result = SimulationLog(
        scenario_id=scenario.scenario_id,
        seed=scenario.seed,
        duration=scenario.duration,
        n_intersections=k,
        detector_events=events,
        vehicle_records=all_records,
        spawned=spawned,
        exited=exited,
        remaining=remaining,
    )
    result.travel_times = {
        "E": extract_travel_times(result, "E"),
        "W": extract_travel_times(result, "W"),
    }
    if collect_gaps:
        result.min_gap_seen = min_gap_seen
    return result


def extract_travel_times(sim_log: SimulationLog, direction: str):
    """Corridor traversal times (s) for vehicles that crossed both the
    first and the last stop line in the given direction."""
    if direction not in ("E", "W"):
        raise ConfigError(f"direction must be 'E' or 'W', got {direction!r}")
    out = []
    for rec in sim_log.vehicle_records:
        if rec.direction == direction and rec.entry_t is not None and rec.exit_t is not None:
            out.append(rec.exit_t - rec.entry_t)
    return out


def aggregate_detector_counts(sim_log: SimulationLog, t0: float, t1: float):
    """K x 8 matrix of detector actuations with t0 <= t < t1."""
    counts = np.zeros((sim_log.n_intersections, 8))
    for t, node, phase in sim_log.detector_events:
        if t0 <= t < t1:
            counts[node, phase - 1] += 1.0
    return counts
