"""Structured plot-data series and a dependency-free SVG line chart.

Evaluation emits one text line per curve pair; the renderer turns each
record's pair of curves into a standalone SVG file, actual drawn red and
predicted drawn green.
"""

import json
import os

import numpy as np

from .errors import DataError
from .graphs import bin_centers
from .metrics import CurvePair, ImputationPair

SERIES_SCHEMA = "artery-series/1"

ACTUAL_COLOR = "#c62828"
PREDICTED_COLOR = "#2e7d32"

_MARGIN_L = 52
_MARGIN_R = 14
_MARGIN_T = 28
_MARGIN_B = 40


def dump_series(report) -> str:
    """One JSON object per line: pdf curve pairs, then imputation pairs."""
    lines = [json.dumps({"type": "header", "schema": SERIES_SCHEMA},
                        sort_keys=True, separators=(",", ":"))]
    for c in report.curves:
        lines.append(json.dumps(
            {
                "type": "pdf",
                "id": c.scenario_id,
                "direction": c.direction,
                "actual": [float(v) for v in c.actual],
                "predicted": [float(v) for v in c.predicted],
            },
            sort_keys=True, separators=(",", ":"),
        ))
    for m in report.imputations:
        lines.append(json.dumps(
            {
                "type": "imputation",
                "id": m.scenario_id,
                "actual": [[float(v) for v in row] for row in m.actual],
                "predicted": [[float(v) for v in row] for row in m.predicted],
            },
            sort_keys=True, separators=(",", ":"),
        ))
    return "\n".join(lines) + "\n"


def _floats(obj, context):
    try:
        return np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as err:
        raise DataError(f"{context}: bad number list: {err}") from err


def load_series(text):
    """Parse dump_series output back into curve and imputation pairs."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError("series file is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as err:
        raise DataError(f"series header is not JSON: {err}") from err
    if header.get("schema") != SERIES_SCHEMA:
        raise DataError(f"unknown series schema {header.get('schema')!r}")
    curves, imputations = [], []
    for i, line in enumerate(lines[1:], start=2):
        try:
            d = json.loads(line)
        except json.JSONDecodeError as err:
            raise DataError(f"series line {i} is not JSON: {err}") from err
        kind = d.get("type")
        if kind == "pdf":
            curves.append(CurvePair(
                scenario_id=d["id"], direction=d["direction"],
                actual=_floats(d["actual"], f"line {i} actual"),
                predicted=_floats(d["predicted"], f"line {i} predicted"),
            ))
        elif kind == "imputation":
            imputations.append(ImputationPair(
                scenario_id=d["id"],
                actual=_floats(d["actual"], f"line {i} actual"),
                predicted=_floats(d["predicted"], f"line {i} predicted"),
            ))
        else:
            raise DataError(f"series line {i}: unknown type {kind!r}")
    return curves, imputations


def _fmt(v):
    return f"{v:.6g}"


def _ticks(lo, hi, n):
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def _chart_group(series, title, x_label, y_label, width, height):
    """Axes, ticks, and one polyline per (label, xs, ys, color) triple."""
    plot_w = width - _MARGIN_L - _MARGIN_R
    plot_h = height - _MARGIN_T - _MARGIN_B
    x_lo = min(float(np.min(xs)) for _, xs, _, _ in series)
    x_hi = max(float(np.max(xs)) for _, xs, _, _ in series)
    y_hi = max(float(np.max(ys)) for _, _, ys, _ in series)
    if y_hi <= 0.0:
        y_hi = 1.0
    y_hi *= 1.05
    y_lo = 0.0

    def px(x):
        return _MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return _MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#888" stroke-width="1"/>',
        f'<text x="{width / 2:.1f}" y="16" text-anchor="middle" '
        f'font-size="13" fill="#222">{title}</text>',
        f'<text x="{width / 2:.1f}" y="{height - 6}" text-anchor="middle" '
        f'font-size="11" fill="#444">{x_label}</text>',
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" '
        f'font-size="11" fill="#444" '
        f'transform="rotate(-90 14 {height / 2:.1f})">{y_label}</text>',
    ]
    for t in _ticks(x_lo, x_hi, 6):
        parts.append(
            f'<line x1="{px(t):.1f}" y1="{_MARGIN_T + plot_h}" '
            f'x2="{px(t):.1f}" y2="{_MARGIN_T + plot_h + 4}" stroke="#888"/>'
        )
        parts.append(
            f'<text x="{px(t):.1f}" y="{_MARGIN_T + plot_h + 16}" '
            f'text-anchor="middle" font-size="10" fill="#444">{_fmt(t)}</text>'
        )
    for t in _ticks(y_lo, y_hi, 5):
        parts.append(
            f'<line x1="{_MARGIN_L - 4}" y1="{py(t):.1f}" '
            f'x2="{_MARGIN_L}" y2="{py(t):.1f}" stroke="#888"/>'
        )
        parts.append(
            f'<text x="{_MARGIN_L - 6}" y="{py(t):.1f}" text-anchor="end" '
            f'dominant-baseline="middle" font-size="10" '
            f'fill="#444">{_fmt(t)}</text>'
        )
    for label, xs, ys, color in series:
        points = " ".join(
            f"{px(float(x)):.1f},{py(float(y)):.1f}" for x, y in zip(xs, ys)
        )
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"><title>{label}</title></polyline>'
        )
    legend_x = _MARGIN_L + 8
    for i, (label, _, _, color) in enumerate(series):
        y = _MARGIN_T + 12 + i * 14
        parts.append(
            f'<line x1="{legend_x}" y1="{y}" x2="{legend_x + 18}" y2="{y}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{legend_x + 24}" y="{y + 3}" font-size="10" '
            f'fill="#222">{label}</text>'
        )
    return "<g>" + "".join(parts) + "</g>"


def line_chart(series, title="", x_label="", y_label="",
               width=560, height=340):
    """Standalone SVG document with one chart."""
    body = _chart_group(series, title, x_label, y_label, width, height)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">'
        f'<rect width="{width}" height="{height}" fill="white"/>'
        f"{body}</svg>\n"
    )


def record_chart(scenario_id, curve_pairs, width=560, height=340):
    """One SVG per record: a panel per direction, actual vs predicted."""
    if not curve_pairs:
        raise DataError(f"no curves for record {scenario_id!r}")
    centers = bin_centers()
    panels = []
    for i, pair in enumerate(curve_pairs):
        series = [
            ("actual", centers, pair.actual, ACTUAL_COLOR),
            ("predicted", centers, pair.predicted, PREDICTED_COLOR),
        ]
        group = _chart_group(
            series,
            title=f"{scenario_id} {pair.direction}",
            x_label="travel time (s)",
            y_label="density",
            width=width,
            height=height,
        )
        panels.append(f'<g transform="translate({i * width} 0)">{group}</g>')
    total_w = width * len(curve_pairs)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" '
        f'height="{height}" viewBox="0 0 {total_w} {height}">'
        f'<rect width="{total_w}" height="{height}" fill="white"/>'
        f"{''.join(panels)}</svg>\n"
    )


def write_plots(curves, out_dir):
    """Write one SVG per scenario id; returns the created paths in order."""
    os.makedirs(out_dir, exist_ok=True)
    by_record = {}
    order = []
    for pair in curves:
        if pair.scenario_id not in by_record:
            by_record[pair.scenario_id] = []
            order.append(pair.scenario_id)
        by_record[pair.scenario_id].append(pair)
    paths = []
    for scenario_id in order:
        svg = record_chart(scenario_id, by_record[scenario_id])
        path = os.path.join(out_dir, f"{scenario_id}.svg")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(svg)
        paths.append(path)
    return paths
