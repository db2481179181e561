"""Signalized corridor microsimulation."""

from .engine import aggregate_detector_counts, extract_travel_times, run_scenario
from .sampler import DEFAULT_RANGES, SamplerRanges, sample_scenario
from .signals import SignalSchedule, signal_state
from .types import (
    DT,
    VEHICLE_LENGTH,
    CorridorSpec,
    DemandSpec,
    DrivingBehavior,
    Scenario,
    SimulationLog,
    TimingPlan,
    VehicleRecord,
)

__all__ = [
    "DT",
    "VEHICLE_LENGTH",
    "CorridorSpec",
    "DemandSpec",
    "DrivingBehavior",
    "Scenario",
    "SimulationLog",
    "TimingPlan",
    "VehicleRecord",
    "SignalSchedule",
    "signal_state",
    "run_scenario",
    "extract_travel_times",
    "aggregate_detector_counts",
    "sample_scenario",
    "SamplerRanges",
    "DEFAULT_RANGES",
]
