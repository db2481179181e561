"""Text serialization for scenarios and simulation logs.

Both formats are line-delimited JSON with a schema tag in the first
line.  Serialization is canonical (sorted keys, no whitespace), so a
given object always produces the same bytes; float64 values round-trip
exactly via their shortest decimal representation.
"""

from __future__ import annotations

import json

from ..errors import DataError
from .types import (
    CorridorSpec,
    DemandSpec,
    DrivingBehavior,
    Scenario,
    SimulationLog,
    TimingPlan,
    VehicleRecord,
)

SCENARIO_SCHEMA = "artery-scenario/1"
SIMLOG_SCHEMA = "artery-simlog/1"


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "schema": SCENARIO_SCHEMA,
        "scenario_id": s.scenario_id,
        "seed": s.seed,
        "duration": s.duration,
        "corridor": {
            "n_intersections": s.corridor.n_intersections,
            "segment_lengths": list(s.corridor.segment_lengths),
            "entry_length": s.corridor.entry_length,
            "speed_limit": s.corridor.speed_limit,
            "detector_setback": s.corridor.detector_setback,
        },
        "plans": [
            {
                "cycle": p.cycle,
                "offset": p.offset,
                "greens": list(p.greens),
                "min_green": list(p.min_green),
                "max_green": list(p.max_green),
                "yellow": p.yellow,
                "all_red": p.all_red,
                "ring1": list(p.ring1),
                "ring2": list(p.ring2),
            }
            for p in s.plans
        ],
        "behavior": {
            "accel": s.behavior.accel,
            "decel": s.behavior.decel,
            "emergency_decel": s.behavior.emergency_decel,
            "min_gap": s.behavior.min_gap,
            "sigma": s.behavior.sigma,
            "tau": s.behavior.tau,
            "lc_strategic": s.behavior.lc_strategic,
            "lc_cooperative": s.behavior.lc_cooperative,
            "lc_speed_gain": s.behavior.lc_speed_gain,
            "speed_factor_mean": s.behavior.speed_factor_mean,
            "speed_factor_std": s.behavior.speed_factor_std,
        },
        "demand": {
            "east": s.demand.east,
            "west": s.demand.west,
            "side": s.demand.side,
        },
        "turn_ratios": [list(row) for row in s.turn_ratios],
    }


def scenario_from_dict(d: dict) -> Scenario:
    try:
        if d.get("schema") != SCENARIO_SCHEMA:
            raise DataError(
                f"unsupported scenario schema {d.get('schema')!r}, "
                f"expected {SCENARIO_SCHEMA!r}"
            )
        scenario = Scenario(
            corridor=CorridorSpec(
                n_intersections=d["corridor"]["n_intersections"],
                segment_lengths=tuple(d["corridor"]["segment_lengths"]),
                entry_length=d["corridor"]["entry_length"],
                speed_limit=d["corridor"]["speed_limit"],
                detector_setback=d["corridor"]["detector_setback"],
            ),
            plans=tuple(
                TimingPlan(
                    cycle=p["cycle"],
                    offset=p["offset"],
                    greens=tuple(p["greens"]),
                    min_green=tuple(p["min_green"]),
                    max_green=tuple(p["max_green"]),
                    yellow=p["yellow"],
                    all_red=p["all_red"],
                    ring1=tuple(p["ring1"]),
                    ring2=tuple(p["ring2"]),
                )
                for p in d["plans"]
            ),
            behavior=DrivingBehavior(**d["behavior"]),
            demand=DemandSpec(**d["demand"]),
            turn_ratios=tuple(tuple(row) for row in d["turn_ratios"]),
            seed=d["seed"],
            duration=d["duration"],
            scenario_id=d.get("scenario_id", ""),
        )
    except (KeyError, TypeError) as err:
        raise DataError(f"malformed scenario record: {err}") from err
    scenario.validate()
    return scenario


def dump_scenario(s: Scenario) -> str:
    return _dumps(scenario_to_dict(s)) + "\n"


def load_scenario(text: str) -> Scenario:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as err:
        raise DataError(f"scenario file is not valid JSON: {err}") from err
    return scenario_from_dict(d)


# ---------------------------------------------------------------------------
# simulation logs
# ---------------------------------------------------------------------------


def dump_log(sim_log: SimulationLog) -> str:
    lines = [
        _dumps(
            {
                "type": "header",
                "schema": SIMLOG_SCHEMA,
                "scenario_id": sim_log.scenario_id,
                "seed": sim_log.seed,
                "duration": sim_log.duration,
                "k": sim_log.n_intersections,
            }
        )
    ]
    for t, node, phase in sim_log.detector_events:
        lines.append(_dumps({"type": "det", "t": t, "node": node, "phase": phase}))
    for r in sim_log.vehicle_records:
        lines.append(
            _dumps(
                {
                    "type": "veh",
                    "vid": r.vid,
                    "kind": r.kind,
                    "dir": r.direction,
                    "origin": r.origin_node,
                    "spawn": r.spawn_t,
                    "factor": r.speed_factor,
                    "entry": r.entry_t,
                    "exit": r.exit_t,
                    "off_at": r.removed_at_node,
                }
            )
        )
    lines.append(
        _dumps(
            {
                "type": "end",
                "spawned": sim_log.spawned,
                "exited": sim_log.exited,
                "remaining": sim_log.remaining,
            }
        )
    )
    return "\n".join(lines) + "\n"


def load_log(text: str) -> SimulationLog:
    from .engine import extract_travel_times

    sim_log = None
    closed = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            kind = d["type"]
            if kind == "header":
                if d.get("schema") != SIMLOG_SCHEMA:
                    raise DataError(
                        f"unsupported log schema {d.get('schema')!r}, "
                        f"expected {SIMLOG_SCHEMA!r}"
                    )
                sim_log = SimulationLog(
                    scenario_id=d["scenario_id"],
                    seed=d["seed"],
                    duration=d["duration"],
                    n_intersections=d["k"],
                )
            elif sim_log is None:
                raise DataError("log does not start with a header line")
            elif kind == "det":
                sim_log.detector_events.append((d["t"], d["node"], d["phase"]))
            elif kind == "veh":
                sim_log.vehicle_records.append(
                    VehicleRecord(
                        vid=d["vid"],
                        kind=d["kind"],
                        direction=d["dir"],
                        origin_node=d["origin"],
                        spawn_t=d["spawn"],
                        speed_factor=d["factor"],
                        entry_t=d["entry"],
                        exit_t=d["exit"],
                        removed_at_node=d["off_at"],
                    )
                )
            elif kind == "end":
                sim_log.spawned = d["spawned"]
                sim_log.exited = d["exited"]
                sim_log.remaining = d["remaining"]
                closed = True
            else:
                raise DataError(f"unknown record type {kind!r}")
        except DataError:
            raise
        except (json.JSONDecodeError, KeyError, TypeError) as err:
            raise DataError(f"corrupt log record at line {lineno}: {err}") from err
    if sim_log is None:
        raise DataError("empty log file")
    if not closed:
        raise DataError("log file is truncated (missing end record)")
    sim_log.travel_times = {
        "E": extract_travel_times(sim_log, "E"),
        "W": extract_travel_times(sim_log, "W"),
    }
    return sim_log
