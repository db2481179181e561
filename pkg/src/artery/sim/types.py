"""Scenario description types for the corridor simulator.

A corridor is a straight arterial with K signalized intersections and a
single through lane per direction.  Eastbound chainage starts at the
west entry; westbound chainage starts at the east entry.  Both entry
approaches have the same configurable length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ConfigError

# Simulation timestep (s).  Fixed; several guarantees (no-collision
# clamp, crossing detection) assume it.
DT = 0.5

# Bumper-to-bumper vehicle length (m).
VEHICLE_LENGTH = 5.0

# NEMA-style phase numbering used throughout: 2/6 arterial through
# (east/west), 5/1 arterial left (east/west), 8/3 northbound
# through/left, 4/7 southbound through/left.
ARTERIAL_PHASES = (1, 2, 5, 6)
CROSS_PHASES = (3, 4, 7, 8)

# Movement codes.
THROUGH, LEFT, RIGHT = 0, 1, 2

# Approach order of the 12 turn-ratio entries: (L, T, R) for eastbound,
# westbound, northbound, southbound.
APPROACHES = ("E", "W", "N", "S")


@dataclass(frozen=True)
class CorridorSpec:
    """Fixed geometry of the arterial."""

    n_intersections: int
    segment_lengths: tuple  # K-1 stop-line spacings (m), shared by both directions
    entry_length: float = 600.0  # boundary to first stop line (m)
    speed_limit: float = 15.6  # m/s
    detector_setback: float = 500.0  # detector distance upstream of stop line (m)

    def validate(self):
        k = self.n_intersections
        if k < 2:
            raise ConfigError(f"corridor needs at least 2 intersections, got {k}")
        if len(self.segment_lengths) != k - 1:
            raise ConfigError(
                f"expected {k - 1} segment lengths for {k} intersections, "
                f"got {len(self.segment_lengths)}"
            )
        for s in self.segment_lengths:
            if s < 25.0:
                raise ConfigError(f"segment length {s} m below 25 m minimum")
        if self.entry_length < 50.0:
            raise ConfigError("entry length below 50 m")
        if self.speed_limit <= 0:
            raise ConfigError("speed limit must be positive")
        if self.detector_setback <= 0:
            raise ConfigError("detector setback must be positive")


@dataclass(frozen=True)
class TimingPlan:
    """Dual-ring fixed-time plan for one intersection.

    Ring 1 serves phases (1, 2) then crosses the barrier into (3, 4);
    ring 2 serves (5, 6) then (7, 8).  Each phase runs green for its
    assigned split followed by yellow and all-red.  Plans are fixed
    time: every phase is served exactly once per cycle and the assigned
    split equals the phase's effective (max) green.
    """

    cycle: float
    offset: float
    greens: tuple  # assigned green per phase 1..8 (s)
    min_green: tuple
    max_green: tuple
    yellow: float = 4.0
    all_red: float = 2.0
    ring1: tuple = (1, 2, 3, 4)
    ring2: tuple = (5, 6, 7, 8)
    barrier_after: int = 2  # ring slots on the arterial side of the barrier

    def green_of(self, phase):
        return self.greens[phase - 1]

    def validate(self):
        if self.cycle <= 0:
            raise ConfigError("cycle length must be positive")
        if not 0.0 <= self.offset < self.cycle:
            raise ConfigError(
                f"offset {self.offset} outside [0, {self.cycle})"
            )
        for name, seq in (("greens", self.greens), ("min_green", self.min_green),
                          ("max_green", self.max_green)):
            if len(seq) != 8:
                raise ConfigError(f"{name} must list 8 phases, got {len(seq)}")
        if self.yellow < 0 or self.all_red < 0:
            raise ConfigError("yellow and all-red must be nonnegative")
        if sorted(self.ring1 + self.ring2) != [1, 2, 3, 4, 5, 6, 7, 8]:
            raise ConfigError("rings must partition phases 1..8")
        if self.barrier_after != 2:
            raise ConfigError("barrier must follow two phases per ring")
        if set(self.ring1[:2]) | set(self.ring2[:2]) != {1, 2, 5, 6}:
            raise ConfigError("arterial side of the barrier must serve phases 1,2,5,6")
        for p in range(1, 9):
            g = self.greens[p - 1]
            if g < 0:
                raise ConfigError(f"phase {p} green is negative")
            if not self.min_green[p - 1] - 1e-9 <= g <= self.max_green[p - 1] + 1e-9:
                raise ConfigError(
                    f"phase {p} green {g} outside [min, max] = "
                    f"[{self.min_green[p - 1]}, {self.max_green[p - 1]}]"
                )
        # Ring sums must tile the cycle and meet at the barrier together.
        slot = self.yellow + self.all_red
        for ring in (self.ring1, self.ring2):
            total = sum(self.greens[p - 1] + slot for p in ring)
            if abs(total - self.cycle) > 1e-6:
                raise ConfigError(
                    f"ring {ring} sums to {total} s, cycle is {self.cycle} s"
                )
        side1 = sum(self.greens[p - 1] + slot for p in self.ring1[:2])
        side2 = sum(self.greens[p - 1] + slot for p in self.ring2[:2])
        if abs(side1 - side2) > 1e-6:
            raise ConfigError(
                f"rings reach the barrier at {side1} s and {side2} s"
            )


@dataclass(frozen=True)
class DrivingBehavior:
    """Scenario-wide driver population parameters.

    The three lane-change fields are carried as descriptive features
    only: the simulated corridor has a single through lane per
    direction, so they never influence motion.
    """

    accel: float  # m/s^2
    decel: float  # comfortable braking (m/s^2)
    emergency_decel: float  # braking bound (m/s^2)
    min_gap: float  # standstill gap (m)
    sigma: float  # dawdling factor in [0, 1]
    tau: float  # reaction headway (s)
    lc_strategic: float
    lc_cooperative: float
    lc_speed_gain: float
    speed_factor_mean: float
    speed_factor_std: float

    def validate(self):
        if self.accel <= 0 or self.decel <= 0:
            raise ConfigError("accel and decel must be positive")
        if self.emergency_decel < self.decel:
            raise ConfigError("emergency decel below comfortable decel")
        if self.min_gap <= 0:
            raise ConfigError("min gap must be positive")
        if not 0.0 <= self.sigma <= 1.0:
            raise ConfigError(f"sigma {self.sigma} outside [0, 1]")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.speed_factor_mean <= 0 or self.speed_factor_std < 0:
            raise ConfigError("speed factor distribution invalid")

    def as_feature_vector(self):
        """The five car-following fields used as edge features."""
        return (self.accel, self.decel, self.min_gap, self.sigma, self.tau)


@dataclass(frozen=True)
class DemandSpec:
    """Poisson arrival rates in veh/h per entry approach."""

    east: float  # corridor entry at the west end, travelling east
    west: float  # corridor entry at the east end, travelling west
    side: float  # each side-street approach (two per intersection)

    def validate(self):
        for name in ("east", "west", "side"):
            if getattr(self, name) < 0:
                raise ConfigError(f"demand.{name} must be nonnegative")


@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce one simulation run."""

    corridor: CorridorSpec
    plans: tuple  # one TimingPlan per intersection
    behavior: DrivingBehavior
    demand: DemandSpec
    turn_ratios: tuple  # K rows of 12: (L,T,R) per approach E,W,N,S
    seed: int
    duration: float
    scenario_id: str = ""

    def validate(self):
        self.corridor.validate()
        k = self.corridor.n_intersections
        if len(self.plans) != k:
            raise ConfigError(f"expected {k} timing plans, got {len(self.plans)}")
        for plan in self.plans:
            plan.validate()
        cycles = {plan.cycle for plan in self.plans}
        if len(cycles) != 1:
            raise ConfigError(
                f"coordinated corridor requires one shared cycle, got {sorted(cycles)}"
            )
        self.behavior.validate()
        self.demand.validate()
        if len(self.turn_ratios) != k:
            raise ConfigError(f"expected {k} turn-ratio rows, got {len(self.turn_ratios)}")
        for i, row in enumerate(self.turn_ratios):
            if len(row) != 12:
                raise ConfigError(f"turn-ratio row {i} has {len(row)} entries, expected 12")
            for a in range(4):
                trio = row[3 * a : 3 * a + 3]
                if min(trio) < 0:
                    raise ConfigError(f"negative turn ratio at intersection {i}")
                if abs(sum(trio) - 1.0) > 1e-6:
                    raise ConfigError(
                        f"turn ratios for approach {APPROACHES[a]} at intersection {i} "
                        f"sum to {sum(trio)}, expected 1"
                    )
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.duration < 2.0 * self.plans[0].cycle:
            raise ConfigError(
                f"duration {self.duration} s shorter than two cycles "
                f"({2.0 * self.plans[0].cycle} s)"
            )

    @property
    def cycle(self):
        return self.plans[0].cycle


@dataclass
class VehicleRecord:
    """Per-vehicle lifecycle entry in the simulation log."""

    vid: int
    kind: str  # 'corridor' (spawned at an entry) or 'side'
    direction: str  # 'E'/'W' once on the corridor, 'N'/'S' approach otherwise
    origin_node: int  # -1 for corridor entries, intersection index for side
    spawn_t: float
    speed_factor: float
    entry_t: float = None  # first stop-line crossing
    exit_t: float = None  # last stop-line crossing
    removed_at_node: int = None  # turned off the corridor here


@dataclass
class SimulationLog:
    """Deterministic record of one scenario run."""

    scenario_id: str
    seed: int
    duration: float
    n_intersections: int
    detector_events: list = field(default_factory=list)  # (t, node, phase)
    vehicle_records: list = field(default_factory=list)
    travel_times: dict = field(default_factory=lambda: {"E": [], "W": []})
    spawned: int = 0
    exited: int = 0
    remaining: int = 0
