"""Distribution metrics, scenario bucketing, and evaluation reports.

Four scores compare an actual travel-time distribution against a predicted
one: MAPE and NRMSE on the discretized density vectors, the Hellinger
distance between them, and the absolute error of the fitted standard
deviations.  Records are grouped by signal cycle length, corridor volume,
and through-green share so each score can be read per traffic regime.
"""

import logging
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .graphs import MASKED_COLS

log = logging.getLogger("artery.metrics")

# Density bins below this are treated as zero and excluded from MAPE.
MAPE_EPS = 1e-12

LEVELS = ("Low", "Medium", "High")


def _pair(y_true, y_pred, metric):
    t = np.asarray(y_true, dtype=float).ravel()
    p = np.asarray(y_pred, dtype=float).ravel()
    if t.shape != p.shape:
        raise ShapeError(
            f"{metric}: length mismatch {t.shape[0]} vs {p.shape[0]}"
        )
    if t.size == 0:
        raise ShapeError(f"{metric}: empty input")
    return t, p


def mape(y_true, y_pred):
    """Mean absolute percentage error over bins with nonzero truth."""
    t, p = _pair(y_true, y_pred, "mape")
    keep = np.abs(t) >= MAPE_EPS
    dropped = int(t.size - keep.sum())
    if not keep.any():
        raise DataError(
            f"mape undefined: all {t.size} entries below {MAPE_EPS}"
        )
    if dropped:
        log.debug("mape: excluded %d of %d near-zero bins", dropped, t.size)
    ratio = np.abs(t[keep] - p[keep]) / np.abs(t[keep])
    return float(np.mean(ratio) * 100.0)


def std_error(sigma_true, sigma_pred):
    """Absolute gap between actual and predicted spread, in seconds."""
    return float(abs(float(sigma_true) - float(sigma_pred)))


def hellinger(y_true, y_pred):
    t, p = _pair(y_true, y_pred, "hellinger")
    if (t < 0.0).any() or (p < 0.0).any():
        raise DataError("hellinger undefined: negative input")
    gap = np.sqrt(t) - np.sqrt(p)
    return float(np.sqrt(np.sum(gap * gap)) / np.sqrt(2.0))


def nrmse(y_true, y_pred):
    """Root mean squared error scaled by the range of the truth."""
    t, p = _pair(y_true, y_pred, "nrmse")
    spread = float(t.max() - t.min())
    if spread <= 0.0:
        raise DataError("nrmse undefined: constant y_true")
    return float(np.sqrt(np.mean((t - p) ** 2)) / spread)


@dataclass(frozen=True)
class BucketSpec:
    """Two thresholds splitting a covariate into Low/Medium/High.

    Intervals are half-open: Low is anything below ``lower``, Medium is
    [lower, upper), High is upper and beyond.
    """

    covariate: str
    lower: float
    upper: float

    def __post_init__(self):
        if self.covariate not in COVARIATE_KEYS:
            raise ConfigError(
                f"unknown covariate {self.covariate!r}; "
                f"expected one of {sorted(COVARIATE_KEYS)}"
            )
        if not self.upper > self.lower:
            raise ConfigError(
                f"bucket thresholds must increase: {self.lower} >= {self.upper}"
            )

    def level(self, value):
        v = float(value)
        if v < self.lower:
            return "Low"
        if v < self.upper:
            return "Medium"
        return "High"


def _cycle_value(cov):
    return float(cov.cycle)


def _volume_value(cov):
    # Corridor volume counts completed journeys in both directions.
    return float(cov.volume_e + cov.volume_w)


def _green_value(cov):
    # The larger of the two directional through-green shares.
    return float(max(cov.green_pct_e, cov.green_pct_w))


COVARIATE_KEYS = {
    "cycle_length": _cycle_value,
    "traffic_volume": _volume_value,
    "max_green_pct": _green_value,
}

DEFAULT_BUCKETS = (
    BucketSpec("cycle_length", 160.0, 200.0),
    BucketSpec("traffic_volume", 700.0, 900.0),
    BucketSpec("max_green_pct", 0.25, 0.50),
)


def covariate_value(covariates, name):
    try:
        reader = COVARIATE_KEYS[name]
    except KeyError:
        raise ConfigError(f"unknown covariate {name!r}") from None
    return reader(covariates)


def bucket(records, spec):
    """Partition records into {level: [record, ...]}; every record lands
    in exactly one level."""
    out = {level: [] for level in LEVELS}
    for record in records:
        value = covariate_value(record.covariates, spec.covariate)
        out[spec.level(value)].append(record)
    return out


_METRIC_KEYS = (
    "mape_east", "mape_west", "mape",
    "std_east", "std_west", "std",
    "hld_east", "hld_west", "hld",
    "nrmse_east", "nrmse_west", "nrmse",
)


@dataclass
class MetricRow:
    experiment: str
    level: str
    count: int
    mape_east: float = None
    mape_west: float = None
    mape: float = None
    std_east: float = None
    std_west: float = None
    std: float = None
    hld_east: float = None
    hld_west: float = None
    hld: float = None
    nrmse_east: float = None
    nrmse_west: float = None
    nrmse: float = None


@dataclass
class CurvePair:
    """Actual vs predicted density for one record and direction."""

    scenario_id: str
    direction: str
    actual: np.ndarray
    predicted: np.ndarray


@dataclass
class ImputationPair:
    """Ground-truth vs imputed masked node features for one record."""

    scenario_id: str
    actual: np.ndarray
    predicted: np.ndarray


@dataclass
class EvalReport:
    rows: list
    curves: list
    imputations: list


class PerfectPredictor:
    """Echoes each record's own target; a floor for sanity checks."""

    def predict(self, record):
        from .model import Prediction

        t = record.target
        return Prediction(
            mu_e=t.mu_e, sigma_e=t.sigma_e,
            mu_w=t.mu_w, sigma_w=t.sigma_w,
            pdf_e=t.pdf_e.copy(), pdf_w=t.pdf_w.copy(),
            imputed=record.static.x[:, list(MASKED_COLS)].copy(),
        )


def record_scores(record, prediction):
    """The eight per-direction scores for one record."""
    t = record.target
    return {
        "mape_east": mape(t.pdf_e, prediction.pdf_e),
        "mape_west": mape(t.pdf_w, prediction.pdf_w),
        "std_east": std_error(t.sigma_e, prediction.sigma_e),
        "std_west": std_error(t.sigma_w, prediction.sigma_w),
        "hld_east": hellinger(t.pdf_e, prediction.pdf_e),
        "hld_west": hellinger(t.pdf_w, prediction.pdf_w),
        "nrmse_east": nrmse(t.pdf_e, prediction.pdf_e),
        "nrmse_west": nrmse(t.pdf_w, prediction.pdf_w),
    }


def _aggregate(experiment, level, score_dicts):
    row = MetricRow(experiment=experiment, level=level, count=len(score_dicts))
    if not score_dicts:
        return row
    for stem in ("mape", "std", "hld", "nrmse"):
        east = float(np.mean([s[f"{stem}_east"] for s in score_dicts]))
        west = float(np.mean([s[f"{stem}_west"] for s in score_dicts]))
        setattr(row, f"{stem}_east", east)
        setattr(row, f"{stem}_west", west)
        setattr(row, stem, (east + west) / 2.0)
    return row


def evaluate(model, records, experiments=DEFAULT_BUCKETS):
    """Score a model on a held-out split.

    ``model`` needs only a ``predict(record)`` method.  Returns the metric
    table (one row per experiment level plus a Total row) together with
    the per-record curve and imputation pairs used by the plot writer.
    """
    if not records:
        raise DataError("evaluate needs a nonempty test split")
    scores = {}
    curves = []
    imputations = []
    for record in records:
        pred = model.predict(record)
        scores[record.scenario_id] = record_scores(record, pred)
        curves.append(CurvePair(
            record.scenario_id, "east",
            record.target.pdf_e.copy(), np.asarray(pred.pdf_e, dtype=float),
        ))
        curves.append(CurvePair(
            record.scenario_id, "west",
            record.target.pdf_w.copy(), np.asarray(pred.pdf_w, dtype=float),
        ))
        imputations.append(ImputationPair(
            record.scenario_id,
            record.static.x[:, list(MASKED_COLS)].copy(),
            np.asarray(pred.imputed, dtype=float),
        ))
    rows = []
    for spec in experiments:
        parts = bucket(records, spec)
        for level in LEVELS:
            part_scores = [scores[r.scenario_id] for r in parts[level]]
            rows.append(_aggregate(spec.covariate, level, part_scores))
    rows.append(_aggregate("total", "Total", list(scores.values())))
    log.info("evaluated %d records into %d table rows", len(records), len(rows))
    return EvalReport(rows=rows, curves=curves, imputations=imputations)


def render_metric_table(rows):
    """Tab-separated table; floats use repr so files compare bitwise."""
    names = [f.name for f in fields(MetricRow)]
    lines = ["\t".join(names)]
    for row in rows:
        cells = []
        for name in names:
            value = getattr(row, name)
            if value is None:
                cells.append("")
            elif isinstance(value, float):
                cells.append(repr(value))
            else:
                cells.append(str(value))
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def write_metric_table(rows, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_metric_table(rows))
