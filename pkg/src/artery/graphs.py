"""Graph construction from simulation logs.

A corridor becomes two graph views over the same K nodes (one per
intersection, west to east):

* static view: per-phase detector counts over an aggregation window as
  node features, with the arterial-phase columns hidden by a binary
  mask, plus per-edge descriptors (approach length, downstream turn
  ratios, driver population, volume density);
* dynamic view: signal-timing state (cycle, offset ratio, green ratios)
  concatenated with per-phase inflow counts, over the same edges.

Each direction contributes K directed edges: K-1 between consecutive
intersections plus one self-referential edge at the direction's first
intersection standing for the corridor entry approach, so the edge set
has 2K rows.  Travel-time targets are normal fits over each direction's
completed corridor journeys, discretized to a fixed 250-bin density.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ShapeError

log = logging.getLogger(__name__)

# Node-feature columns hidden from the imputation network: NEMA phases
# 1, 2, 5, 6 (the arterial movements).
MASKED_PHASES = (1, 2, 5, 6)
MASKED_COLS = (0, 1, 4, 5)

# Edge directions.
EAST, WEST = 0, 1

# Through phase column per direction (phase 2 east, phase 6 west).
THROUGH_COL = {EAST: 1, WEST: 5}

# Edge feature width: distance + 12 turn ratios + 5 driver fields + density.
D_EDGE = 19

# Discretized density support: bin centers 5, 15, ..., 2495 s.
N_BINS = 250
BIN_WIDTH = 10.0

SIGMA_FLOOR = 1.0

# Dynamic node features: cycle, offset ratio, four green ratios
# (phases 1, 2, 5, 6), then the eight per-phase inflow counts.
GREEN_RATIO_PHASES = (1, 2, 5, 6)
D_DYNAMIC = 2 + len(GREEN_RATIO_PHASES) + 8


@dataclass
class StaticGraph:
    """Masked-count view: raw X, mask, and edge descriptors."""

    x: np.ndarray         # K x 8 counts (unmasked; supervision source)
    e: np.ndarray         # 2K x D_EDGE
    mask: np.ndarray      # K x 8, zeros at MASKED_COLS
    edge_src: np.ndarray  # 2K
    edge_dst: np.ndarray  # 2K
    edge_dir: np.ndarray  # 2K of EAST/WEST

    @property
    def k(self):
        return self.x.shape[0]


@dataclass
class DynamicGraph:
    """Signal-plus-inflow view over the same topology."""

    xp: np.ndarray  # K x D_DYNAMIC
    ep: np.ndarray  # 2K x D_EDGE
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_dir: np.ndarray

    @property
    def k(self):
        return self.xp.shape[0]


@dataclass
class TravelTimeTarget:
    mu_e: float
    sigma_e: float
    mu_w: float
    sigma_w: float
    pdf_e: np.ndarray  # N_BINS densities
    pdf_w: np.ndarray


@dataclass
class Covariates:
    """Per-record grouping keys for the evaluation buckets."""

    cycle: float
    volume_e: int        # completed corridor journeys per direction
    volume_w: int
    green_pct_e: float   # mean through-green share of the cycle
    green_pct_w: float


@dataclass
class DatasetRecord:
    scenario_id: str
    static: StaticGraph
    dynamic: DynamicGraph
    target: TravelTimeTarget
    covariates: Covariates


def bin_centers():
    return np.arange(N_BINS) * BIN_WIDTH + BIN_WIDTH / 2.0


def corridor_edges(k):
    """(src, dst, dir) arrays: K eastbound edges then K westbound."""
    src = np.empty(2 * k, dtype=np.int64)
    dst = np.empty(2 * k, dtype=np.int64)
    direction = np.empty(2 * k, dtype=np.int64)
    for m in range(k):
        src[m] = max(m - 1, 0)
        dst[m] = m
        direction[m] = EAST
        src[k + m] = min(k - m, k - 1)
        dst[k + m] = k - 1 - m
        direction[k + m] = WEST
    return src, dst, direction


def edge_distances(corridor):
    """Approach length (m) feeding each edge's downstream stop line."""
    segs = list(corridor.segment_lengths)
    east = [corridor.entry_length] + segs
    west = [corridor.entry_length] + segs[::-1]
    return np.array(east + west)


def default_mask(k):
    mask = np.ones((k, 8))
    mask[:, list(MASKED_COLS)] = 0.0
    return mask


def apply_mask(x, mask):
    if x.shape != mask.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match X {x.shape}")
    return x * mask


def _check_window(scenario, window):
    t0, t1 = window
    if not 0.0 <= t0 < t1 <= scenario.duration:
        raise ConfigError(
            f"window [{t0}, {t1}) outside run duration {scenario.duration}"
        )
    if t1 - t0 < scenario.cycle:
        log.warning(
            "aggregation window %.0fs is shorter than the %.0fs cycle",
            t1 - t0, scenario.cycle,
        )


def _edge_volumes(counts, dst, direction):
    """Downstream through-movement count per edge."""
    return np.array(
        [counts[dst[j], THROUGH_COL[direction[j]]] for j in range(dst.shape[0])]
    )


def _edge_features(scenario, counts):
    """2K x D_EDGE rows (dis, tmc of dst, drv, volume/dis) plus topology."""
    k = scenario.corridor.n_intersections
    src, dst, direction = corridor_edges(k)
    volumes = _edge_volumes(counts, dst, direction)
    dis = edge_distances(scenario.corridor)
    drv = np.array(scenario.behavior.as_feature_vector())
    e = np.empty((2 * k, D_EDGE))
    for j in range(2 * k):
        e[j, 0] = dis[j]
        e[j, 1:13] = scenario.turn_ratios[dst[j]]
        e[j, 13:18] = drv
        e[j, 18] = volumes[j] / dis[j]
    return e, src, dst, direction


def build_static_graph(sim_log, scenario, window) -> StaticGraph:
    """Aggregate detector counts over the window and attach edge rows."""
    from .sim.engine import aggregate_detector_counts

    _check_window(scenario, window)
    x = aggregate_detector_counts(sim_log, window[0], window[1])
    e, src, dst, direction = _edge_features(scenario, x)
    return StaticGraph(
        x=x, e=e, mask=default_mask(scenario.corridor.n_intersections),
        edge_src=src, edge_dst=dst, edge_dir=direction,
    )


def build_dynamic_graph(sim_log, scenario, window, inf_source) -> DynamicGraph:
    """Assemble the signal-state view.

    inf_source is either the string "truth" (recount from the log over
    the window) or a K x 8 array of per-phase counts, e.g. with masked
    cells replaced by imputations.  Cells left as NaN are reported.
    """
    k = scenario.corridor.n_intersections
    if isinstance(inf_source, str):
        if inf_source != "truth":
            raise ConfigError(f"unknown inf_source {inf_source!r}")
        from .sim.engine import aggregate_detector_counts

        _check_window(scenario, window)
        inf = aggregate_detector_counts(sim_log, window[0], window[1])
    else:
        inf = np.asarray(inf_source, dtype=float)
        if inf.shape != (k, 8):
            raise ShapeError(f"inf_source shape {inf.shape}, expected {(k, 8)}")
        if np.isnan(inf).any():
            holes = [
                (int(n), int(p) + 1) for n, p in zip(*np.nonzero(np.isnan(inf)))
            ]
            raise DataError(
                f"inf_source has no value for (node, phase) cells {holes}"
            )

    xp = np.empty((k, D_DYNAMIC))
    for node, plan in enumerate(scenario.plans):
        xp[node, 0] = plan.cycle
        xp[node, 1] = plan.offset / plan.cycle
        for i, phase in enumerate(GREEN_RATIO_PHASES):
            xp[node, 2 + i] = plan.max_green[phase - 1] / plan.cycle
        xp[node, 6:] = inf[node]

    ep, src, dst, direction = _edge_features(scenario, inf)
    return DynamicGraph(
        xp=xp, ep=ep, edge_src=src, edge_dst=dst, edge_dir=direction,
    )


def merge_imputations(masked_x, imputed):
    """Fill the masked phase columns of a K x 8 matrix from K x 4 values."""
    masked_x = np.asarray(masked_x, dtype=float)
    imputed = np.asarray(imputed, dtype=float)
    if imputed.shape != (masked_x.shape[0], len(MASKED_COLS)):
        raise ShapeError(
            f"imputations shape {imputed.shape}, expected "
            f"{(masked_x.shape[0], len(MASKED_COLS))}"
        )
    full = masked_x.copy()
    full[:, list(MASKED_COLS)] = imputed
    return full


def refresh_dynamic(dynamic: DynamicGraph, inf) -> DynamicGraph:
    """New dynamic view with the inflow block and densities recomputed.

    Used during training to splice imputed counts into stored graphs
    without the original scenario at hand.
    """
    inf = np.asarray(inf, dtype=float)
    k = dynamic.k
    if inf.shape != (k, 8):
        raise ShapeError(f"inf shape {inf.shape}, expected {(k, 8)}")
    xp = dynamic.xp.copy()
    xp[:, 6:] = inf
    ep = dynamic.ep.copy()
    volumes = _edge_volumes(inf, dynamic.edge_dst, dynamic.edge_dir)
    ep[:, 18] = volumes / ep[:, 0]
    return DynamicGraph(
        xp=xp, ep=ep, edge_src=dynamic.edge_src,
        edge_dst=dynamic.edge_dst, edge_dir=dynamic.edge_dir,
    )


def fit_normal_pdf(samples):
    """(mean, floored sample std) of travel-time samples in seconds."""
    n = len(samples)
    if n < 2:
        raise DataError(f"need at least 2 travel-time samples, got {n}")
    arr = np.asarray(samples, dtype=float)
    mu = float(arr.mean())
    sigma = float(max(arr.std(ddof=1), SIGMA_FLOOR))
    centered = arr - mu
    m2 = float((centered**2).mean())
    if m2 > 0:
        skew = float((centered**3).mean() / m2**1.5)
        kurt = float((centered**4).mean() / m2**2 - 3.0)
    else:
        skew = kurt = 0.0
    log.debug(
        "normal fit: n=%d mu=%.1f sigma=%.2f skew=%.2f excess-kurtosis=%.2f",
        n, mu, sigma, skew, kurt,
    )
    return mu, sigma


def discretize_pdf(mu, sigma):
    """Normal density sampled at the N_BINS bin centers."""
    if sigma < SIGMA_FLOOR:
        raise ConfigError(f"sigma {sigma} below floor {SIGMA_FLOOR}")
    c = bin_centers()
    z = (c - mu) / sigma
    return np.exp(-0.5 * z * z) / (sigma * np.sqrt(2.0 * np.pi))


def build_target(sim_log) -> TravelTimeTarget:
    stats = {}
    for d in ("E", "W"):
        times = sim_log.travel_times[d]
        try:
            stats[d] = fit_normal_pdf(times)
        except DataError as err:
            raise DataError(f"direction {d}: {err}") from err
    return TravelTimeTarget(
        mu_e=stats["E"][0], sigma_e=stats["E"][1],
        mu_w=stats["W"][0], sigma_w=stats["W"][1],
        pdf_e=discretize_pdf(*stats["E"]),
        pdf_w=discretize_pdf(*stats["W"]),
    )


def build_record(sim_log, scenario, window) -> DatasetRecord:
    """One training record: both graph views, target, covariates."""
    static = build_static_graph(sim_log, scenario, window)
    dynamic = build_dynamic_graph(sim_log, scenario, window, "truth")
    target = build_target(sim_log)
    cycle = scenario.cycle
    green_e = np.mean([p.max_green[1] / p.cycle for p in scenario.plans])
    green_w = np.mean([p.max_green[5] / p.cycle for p in scenario.plans])
    covariates = Covariates(
        cycle=float(cycle),
        volume_e=len(sim_log.travel_times["E"]),
        volume_w=len(sim_log.travel_times["W"]),
        green_pct_e=float(green_e),
        green_pct_w=float(green_w),
    )
    return DatasetRecord(
        scenario_id=sim_log.scenario_id,
        static=static,
        dynamic=dynamic,
        target=target,
        covariates=covariates,
    )
