"""Round-trip and fault-injection tests for the text log formats."""

import numpy as np
import pytest

from artery.errors import DataError
from artery.sim import logio
from artery.sim.engine import run_scenario
from artery.sim.sampler import sample_scenario

from corridors import make_scenario


def sampled(seed=0, **kw):
    rng = np.random.default_rng(seed)
    return sample_scenario(rng, k=4, duration=600.0, scenario_id="rt", **kw)


def test_scenario_round_trip_is_lossless():
    for seed in range(5):
        sc = sampled(seed)
        text = logio.dump_scenario(sc)
        back = logio.load_scenario(text)
        assert back == sc
        assert logio.dump_scenario(back) == text


def test_scenario_dump_is_canonical():
    sc = sampled(3)
    assert logio.dump_scenario(sc) == logio.dump_scenario(sc)
    assert logio.dump_scenario(sc).endswith("\n")


def test_scenario_schema_mismatch_rejected():
    text = logio.dump_scenario(sampled(1))
    with pytest.raises(DataError, match="schema"):
        logio.load_scenario(text.replace("artery-scenario/1", "artery-scenario/9"))


def test_scenario_not_json_rejected():
    with pytest.raises(DataError, match="JSON"):
        logio.load_scenario("not a scenario at all")


def test_scenario_missing_field_rejected():
    text = logio.dump_scenario(sampled(2))
    broken = text.replace('"seed"', '"sead"')
    with pytest.raises(DataError, match="malformed"):
        logio.load_scenario(broken)


def test_log_round_trip_preserves_everything():
    sc = make_scenario(k=4, east=250.0, west=250.0, side=60.0, seed=8,
                       turn_row=(0.1, 0.8, 0.1) * 4, duration=600.0)
    log = run_scenario(sc)
    text = logio.dump_log(log)
    back = logio.load_log(text)
    assert logio.dump_log(back) == text
    assert back.detector_events == log.detector_events
    assert back.vehicle_records == log.vehicle_records
    assert back.travel_times == log.travel_times
    assert (back.spawned, back.exited, back.remaining) == (
        log.spawned, log.exited, log.remaining)


def test_log_corrupt_line_names_its_number():
    text = logio.dump_log(run_scenario(sampled(4)))
    lines = text.splitlines()
    lines[5] = '{"type": "det", "t": 1.0, "node":'
    with pytest.raises(DataError, match="line 6"):
        logio.load_log("\n".join(lines) + "\n")


def test_log_truncation_detected():
    text = logio.dump_log(run_scenario(sampled(4)))
    lines = text.splitlines()
    assert '"type":"end"' in lines[-1]
    with pytest.raises(DataError, match="truncated"):
        logio.load_log("\n".join(lines[:-1]) + "\n")


def test_log_schema_and_header_errors():
    text = logio.dump_log(run_scenario(sampled(4)))
    with pytest.raises(DataError, match="schema"):
        logio.load_log(text.replace("artery-simlog/1", "artery-simlog/0", 1))
    headerless = "\n".join(text.splitlines()[1:]) + "\n"
    with pytest.raises(DataError, match="header"):
        logio.load_log(headerless)
    with pytest.raises(DataError, match="empty"):
        logio.load_log("")


def test_floats_survive_exactly():
    sc = sampled(9)
    log = run_scenario(sc)
    back = logio.load_log(logio.dump_log(log))
    for a, b in zip(log.detector_events, back.detector_events):
        assert a[0] == b[0]
    sc2 = logio.load_scenario(logio.dump_scenario(sc))
    assert sc2.behavior.accel == sc.behavior.accel
    assert sc2.plans[0].offset == sc.plans[0].offset
