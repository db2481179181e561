"""Graph builder and dataset container tests.

Density columns are re-derived from the raw log by an independent
recount; the normal-fit oracle values below were computed directly
from the closed-form expressions before the implementation existed.
"""

import math

import numpy as np
import pytest

from artery import graphs
from artery.datasetio import dump_dataset, load_dataset
from artery.errors import ConfigError, DataError, ShapeError
from artery.graphs import (
    EAST,
    WEST,
    apply_mask,
    bin_centers,
    build_dynamic_graph,
    build_record,
    build_static_graph,
    build_target,
    corridor_edges,
    default_mask,
    discretize_pdf,
    edge_distances,
    fit_normal_pdf,
    merge_imputations,
    refresh_dynamic,
)
from artery.sim.engine import run_scenario

from corridors import make_scenario

# Frozen closed-form values.
PEAK_DENSITY_SIGMA_50 = 0.007978845608028654
STD_100_200 = 70.71067811865476


@pytest.fixture(scope="module")
def run():
    sc = make_scenario(k=4, east=300.0, west=280.0, side=60.0, seed=17,
                       turn_row=(0.1, 0.8, 0.1) * 4, duration=900.0)
    return run_scenario(sc), sc


def test_topology_at_k4():
    src, dst, direction = corridor_edges(4)
    assert src.tolist() == [0, 0, 1, 2, 3, 3, 2, 1]
    assert dst.tolist() == [0, 1, 2, 3, 3, 2, 1, 0]
    assert direction.tolist() == [EAST] * 4 + [WEST] * 4


def test_edge_distances_follow_travel_order(run):
    _, sc = run
    dis = edge_distances(sc.corridor)
    entry = sc.corridor.entry_length
    segs = list(sc.corridor.segment_lengths)
    assert dis.tolist() == [entry] + segs + [entry] + segs[::-1]


def test_static_graph_shapes(run):
    log, sc = run
    g = build_static_graph(log, sc, (0.0, 900.0))
    assert g.x.shape == (4, 8)
    assert g.e.shape == (8, graphs.D_EDGE)
    assert g.mask.shape == (4, 8)
    assert g.edge_src.shape == (8,)


def test_static_counts_match_independent_recount(run):
    log, sc = run
    g = build_static_graph(log, sc, (300.0, 900.0))
    recount = np.zeros((4, 8))
    for t, node, phase in log.detector_events:
        if 300.0 <= t < 900.0:
            recount[node, phase - 1] += 1
    assert np.array_equal(g.x, recount)


def test_density_column_recomputed_from_raw_log(run):
    log, sc = run
    g = build_static_graph(log, sc, (0.0, 900.0))
    for j in range(8):
        through_col = 1 if g.edge_dir[j] == EAST else 5
        vol = g.x[g.edge_dst[j], through_col]
        assert g.e[j, 18] == pytest.approx(vol / g.e[j, 0], rel=1e-12)


def test_edge_rows_carry_tmc_and_driver_fields(run):
    log, sc = run
    g = build_static_graph(log, sc, (0.0, 900.0))
    for j in range(8):
        assert g.e[j, 1:13].tolist() == list(sc.turn_ratios[g.edge_dst[j]])
        assert g.e[j, 13:18].tolist() == list(sc.behavior.as_feature_vector())


def test_mask_zeroes_exactly_the_arterial_phases():
    x = np.ones((4, 8))
    masked = apply_mask(x, default_mask(4))
    for col in range(8):
        expected = 0.0 if col in graphs.MASKED_COLS else 1.0
        assert (masked[:, col] == expected).all()


def test_mask_identity_and_idempotence():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 50, size=(4, 8))
    assert np.array_equal(apply_mask(x, np.ones((4, 8))), x)
    once = apply_mask(x, default_mask(4))
    assert np.array_equal(apply_mask(once, default_mask(4)), once)


def test_mask_shape_mismatch():
    with pytest.raises(ShapeError):
        apply_mask(np.ones((4, 8)), np.ones((3, 8)))


def test_supervision_survives_masking(run):
    log, sc = run
    g = build_static_graph(log, sc, (0.0, 900.0))
    masked = apply_mask(g.x, g.mask)
    assert (masked[:, list(graphs.MASKED_COLS)] == 0).all()
    # Ground truth for every masked cell is still on the graph.
    assert g.x[:, list(graphs.MASKED_COLS)].sum() > 0


def test_window_validation(run):
    log, sc = run
    with pytest.raises(ConfigError):
        build_static_graph(log, sc, (-1.0, 900.0))
    with pytest.raises(ConfigError):
        build_static_graph(log, sc, (0.0, 901.0))
    with pytest.raises(ConfigError):
        build_static_graph(log, sc, (500.0, 500.0))


def test_short_window_warns(run, caplog):
    log, sc = run
    with caplog.at_level("WARNING", logger="artery.graphs"):
        build_static_graph(log, sc, (800.0, 850.0))
    assert any("shorter than" in r.message for r in caplog.records)


def test_dynamic_graph_signal_columns(run):
    log, sc = run
    g = build_dynamic_graph(log, sc, (0.0, 900.0), "truth")
    assert g.xp.shape == (4, graphs.D_DYNAMIC)
    for node, plan in enumerate(sc.plans):
        assert g.xp[node, 0] == plan.cycle
        assert g.xp[node, 1] == plan.offset / plan.cycle
        for i, phase in enumerate((1, 2, 5, 6)):
            assert g.xp[node, 2 + i] == plan.max_green[phase - 1] / plan.cycle


def test_dynamic_offset_ratio_worked_example(run):
    log, sc = run
    g = build_dynamic_graph(log, sc, (0.0, 900.0), "truth")
    assert (g.xp[:, 1] >= 0).all() and (g.xp[:, 1] < 1).all()
    assert (g.xp[:, 2:6] > 0).all() and (g.xp[:, 2:6] <= 1).all()


def test_dynamic_truth_inflow_equals_unmasked_counts(run):
    log, sc = run
    st = build_static_graph(log, sc, (0.0, 900.0))
    dy = build_dynamic_graph(log, sc, (0.0, 900.0), "truth")
    assert np.array_equal(dy.xp[:, 6:], st.x)
    assert np.array_equal(dy.ep, st.e)


def test_dynamic_rejects_missing_imputations(run):
    log, sc = run
    inf = np.zeros((4, 8))
    inf[0, 1] = np.nan
    inf[2, 5] = np.nan
    with pytest.raises(DataError, match=r"\(0, 2\).*\(2, 6\)"):
        build_dynamic_graph(log, sc, (0.0, 900.0), inf)


def test_merge_imputations_fills_masked_columns(run):
    log, sc = run
    g = build_static_graph(log, sc, (0.0, 900.0))
    masked = apply_mask(g.x, g.mask)
    imputed = np.arange(16, dtype=float).reshape(4, 4)
    full = merge_imputations(masked, imputed)
    assert np.array_equal(full[:, list(graphs.MASKED_COLS)], imputed)
    keep = [c for c in range(8) if c not in graphs.MASKED_COLS]
    assert np.array_equal(full[:, keep], g.x[:, keep])
    with pytest.raises(ShapeError):
        merge_imputations(masked, np.ones((4, 3)))


def test_refresh_dynamic_with_truth_is_identity(run):
    log, sc = run
    dy = build_dynamic_graph(log, sc, (0.0, 900.0), "truth")
    again = refresh_dynamic(dy, dy.xp[:, 6:])
    assert np.array_equal(again.xp, dy.xp)
    assert np.array_equal(again.ep, dy.ep)


def test_refresh_dynamic_updates_inflow_and_density(run):
    log, sc = run
    dy = build_dynamic_graph(log, sc, (0.0, 900.0), "truth")
    inf = np.full((4, 8), 7.0)
    new = refresh_dynamic(dy, inf)
    assert (new.xp[:, 6:] == 7.0).all()
    assert np.array_equal(new.xp[:, :6], dy.xp[:, :6])
    assert np.allclose(new.ep[:, 18], 7.0 / new.ep[:, 0])
    assert np.array_equal(new.ep[:, :18], dy.ep[:, :18])
    # The original is untouched.
    assert not (dy.xp[:, 6:] == 7.0).all()


def test_fit_degenerate_samples_hits_sigma_floor():
    mu, sigma = fit_normal_pdf([120.0, 120.0, 120.0])
    assert mu == 120.0
    assert sigma == graphs.SIGMA_FLOOR


def test_fit_two_samples_closed_form():
    mu, sigma = fit_normal_pdf([100.0, 200.0])
    assert mu == 150.0
    assert sigma == pytest.approx(STD_100_200, rel=1e-12)


def test_fit_insufficient_samples():
    with pytest.raises(DataError):
        fit_normal_pdf([100.0])
    with pytest.raises(DataError):
        fit_normal_pdf([])


def test_fit_monte_carlo_recovery():
    rng = np.random.default_rng(60046)
    mu, sigma = fit_normal_pdf(rng.normal(500.0, 50.0, size=10_000).tolist())
    assert 495.0 <= mu <= 505.0
    assert 45.0 <= sigma <= 55.0


def test_discretize_peak_value_and_symmetry():
    pdf = discretize_pdf(505.0, 50.0)
    assert pdf.shape == (250,)
    centers = bin_centers()
    assert centers[50] == 505.0
    assert pdf[50] == pytest.approx(PEAK_DENSITY_SIGMA_50, rel=1e-12)
    assert np.array_equal(pdf[:50][::-1], pdf[51:101])
    assert (pdf >= 0).all()
    assert pdf.argmax() == 50


def test_discretize_mass_for_in_range_targets():
    for sigma in (15.0, 25.0, 50.0, 120.0):
        for mu in (400.0, 505.0, 1234.567, 2000.0):
            if mu - 3 * sigma < 0 or mu + 3 * sigma > 2500:
                continue
            mass = math.fsum(discretize_pdf(mu, sigma)) * graphs.BIN_WIDTH
            assert 0.95 <= mass <= 1.0, (mu, sigma, mass)


def test_discretize_rejects_sub_floor_sigma():
    with pytest.raises(ConfigError):
        discretize_pdf(500.0, 0.5)


def test_build_target_uses_whole_log(run):
    log, _ = run
    target = build_target(log)
    assert target.mu_e == pytest.approx(np.mean(log.travel_times["E"]))
    assert target.sigma_e >= graphs.SIGMA_FLOOR
    assert target.pdf_e.shape == (250,)
    assert np.array_equal(target.pdf_e, discretize_pdf(target.mu_e, target.sigma_e))


def test_build_target_names_starved_direction():
    sc = make_scenario(k=4, east=200.0, west=0.0, side=0.0, seed=5,
                       duration=900.0)
    log = run_scenario(sc)
    with pytest.raises(DataError, match="direction W"):
        build_target(log)


def test_record_covariates(run):
    log, sc = run
    rec = build_record(log, sc, (0.0, 900.0))
    assert rec.scenario_id == log.scenario_id
    assert rec.covariates.cycle == sc.cycle
    assert rec.covariates.volume_e == len(log.travel_times["E"])
    assert rec.covariates.volume_w == len(log.travel_times["W"])
    expected_pct = np.mean([p.max_green[1] / p.cycle for p in sc.plans])
    assert rec.covariates.green_pct_e == pytest.approx(expected_pct)


def test_windows_change_counts_but_not_targets(run):
    log, sc = run
    rec_short = build_record(log, sc, (600.0, 900.0))
    rec_long = build_record(log, sc, (0.0, 900.0))
    assert not np.array_equal(rec_short.static.x, rec_long.static.x)
    assert rec_short.target.mu_e == rec_long.target.mu_e
    assert np.array_equal(rec_short.target.pdf_w, rec_long.target.pdf_w)


def test_dataset_round_trip(run):
    log, sc = run
    rec = build_record(log, sc, (300.0, 900.0))
    text = dump_dataset([rec, rec], window=600.0, tmc_mode="real")
    records, meta = load_dataset(text)
    assert meta.k == 4 and meta.d_edge == graphs.D_EDGE
    assert meta.window == 600.0 and meta.tmc_mode == "real"
    assert meta.count == 2
    assert dump_dataset(records, window=600.0, tmc_mode="real") == text
    back = records[0]
    assert np.array_equal(back.static.x, rec.static.x)
    assert np.array_equal(back.dynamic.ep, rec.dynamic.ep)
    assert back.target.mu_w == rec.target.mu_w
    assert back.covariates == rec.covariates


def test_empty_dataset_round_trips():
    text = dump_dataset([], window=900.0, tmc_mode="random")
    records, meta = load_dataset(text)
    assert records == [] and meta.count == 0


def test_dataset_corruption_names_record_index(run):
    log, sc = run
    rec = build_record(log, sc, (300.0, 900.0))
    text = dump_dataset([rec, rec, rec], window=600.0, tmc_mode="real")
    lines = text.splitlines()
    lines[2] = lines[2][:40]
    with pytest.raises(DataError, match="record 1"):
        load_dataset("\n".join(lines) + "\n")


def test_dataset_truncation_detected(run):
    log, sc = run
    rec = build_record(log, sc, (300.0, 900.0))
    text = dump_dataset([rec, rec], window=600.0, tmc_mode="real")
    lines = text.splitlines()
    with pytest.raises(DataError, match="truncated"):
        load_dataset("\n".join(lines[:-1]) + "\n")


def test_dataset_schema_checked(run):
    log, sc = run
    rec = build_record(log, sc, (300.0, 900.0))
    text = dump_dataset([rec], window=600.0, tmc_mode="real")
    with pytest.raises(DataError, match="schema"):
        load_dataset(text.replace("artery-dataset/1", "artery-dataset/2", 1))
    with pytest.raises(DataError, match="empty"):
        load_dataset("")
