"""Command line pipeline for the corridor experiments.

Subcommands cover the whole workflow: sample and run scenarios, turn
the logs into a graph dataset, train the three-network model, score it
on the held-out split, run single predictions, and render plots.  Every
artifact lands under one run directory next to a sha256 manifest, and a
fixed seed reproduces that directory byte for byte in single-threaded
mode.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .datasetio import read_dataset, write_dataset
from .errors import ArteryError, ConfigError, DataError, NumericError
from .graphs import build_record
from .metrics import PerfectPredictor, evaluate, render_metric_table
from .model import read_checkpoint
from .plots import dump_series, load_series, write_plots
from .sim.engine import run_scenario
from .sim.logio import dump_log, dump_scenario, load_log, load_scenario
from .sim.sampler import sample_scenario
from .train import TrainConfig, split_dataset, train, write_report

log = logging.getLogger("artery.cli")

MANIFEST_SCHEMA = "artery-manifest/1"
WINDOW_CHOICES = (300, 900)
TMC_CHOICES = ("real", "random", "mixed")

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

LOGS_DIR = "logs"
DATASET_FILE = "dataset.jsonl"
BEST_CHECKPOINT = "checkpoint_best.json"
LAST_CHECKPOINT = "checkpoint_last.json"
TRAIN_REPORT = "train_report.tsv"
METRICS_FILE = "metrics.tsv"
SERIES_FILE = "series.jsonl"
PLOTS_DIR = "plots"


@dataclass
class PipelineConfig:
    """Resolved settings for one run directory."""

    out_dir: str = "runs/artery"
    seed: int = 0
    scenarios: int = 20
    k: int = 8
    duration: float = 3600.0
    window: int = 900
    tmc: str = "real"
    jobs: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not self.out_dir:
            raise ConfigError("out_dir must be a nonempty path")
        if self.scenarios < 0:
            raise ConfigError(f"scenario count must be >= 0, got {self.scenarios}")
        if self.k < 2:
            raise ConfigError(f"need at least 2 intersections, got {self.k}")
        if self.window not in WINDOW_CHOICES:
            raise ConfigError(
                f"window must be one of {WINDOW_CHOICES}, got {self.window}"
            )
        if self.duration < self.window:
            raise ConfigError(
                f"duration {self.duration} is shorter than the {self.window}s window"
            )
        if self.tmc not in TMC_CHOICES:
            raise ConfigError(f"tmc must be one of {TMC_CHOICES}, got {self.tmc!r}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")


def _config_dict(parsed):
    if not isinstance(parsed, dict):
        raise ConfigError("config file must hold a JSON object")
    top_names = {f.name for f in fields(PipelineConfig)} - {"train"}
    unknown = set(parsed) - top_names - {"train"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    train_part = parsed.get("train", {})
    if not isinstance(train_part, dict):
        raise ConfigError("config key 'train' must hold an object")
    train_names = {f.name for f in fields(TrainConfig)}
    unknown = set(train_part) - train_names
    if unknown:
        raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
    return {k: v for k, v in parsed.items() if k != "train"}, dict(train_part)


def load_config(path=None, overrides=None, train_overrides=None):
    """Merge defaults, the optional config file, and CLI flags.

    Precedence is flags over file over defaults.  The training seed
    follows the pipeline seed unless the file or a flag pins it.
    """
    top, train_part = {}, {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as err:
            raise ConfigError(f"cannot read config file {path}: {err}") from err
        try:
            parsed = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file {path} is not valid JSON: {err}") from err
        top, train_part = _config_dict(parsed)
    top.update(overrides or {})
    train_part.update(train_overrides or {})
    if "fractions" in train_part:
        train_part["fractions"] = tuple(train_part["fractions"])
    train_part.setdefault("seed", top.get("seed", PipelineConfig.seed))
    try:
        train_config = TrainConfig(**train_part)
        return PipelineConfig(train=train_config, **top)
    except TypeError as err:
        raise ConfigError(f"bad config value: {err}") from err


def config_to_dict(config):
    d = {f.name: getattr(config, f.name) for f in fields(config) if f.name != "train"}
    d["train"] = {
        f.name: getattr(config.train, f.name) for f in fields(config.train)
    }
    d["train"]["fractions"] = list(config.train.fractions)
    return d


# ------------------------------------------------------------------ manifest


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def read_manifest(out_dir):
    path = os.path.join(out_dir, "manifest.json")
    if not os.path.exists(path):
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            parsed = json.load(fh)
        if parsed.get("schema") != MANIFEST_SCHEMA:
            raise DataError(f"unknown manifest schema {parsed.get('schema')!r}")
        return dict(parsed.get("artifacts", {}))
    except json.JSONDecodeError as err:
        raise DataError(f"corrupt manifest {path}: {err}") from err


def update_manifest(out_dir, relpaths):
    """Re-hash the named artifacts and rewrite the manifest."""
    artifacts = read_manifest(out_dir)
    for rel in relpaths:
        artifacts[rel] = _sha256(os.path.join(out_dir, rel))
    payload = {"schema": MANIFEST_SCHEMA, "artifacts": dict(sorted(artifacts.items()))}
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return path


def _write_config_echo(config):
    os.makedirs(config.out_dir, exist_ok=True)
    path = os.path.join(config.out_dir, "config.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, sort_keys=True, indent=1)
        fh.write("\n")


# ------------------------------------------------------------------ simulate


def _scenario_name(index):
    return f"scn{index:05d}"


def _scenario_tmc(tmc, index):
    # Mixed mode alternates scenario by scenario, half real, half random.
    if tmc == "mixed":
        return "real" if index % 2 == 0 else "random"
    return tmc


def _simulate_one(payload):
    seed, index, k, duration, tmc = payload
    child = np.random.SeedSequence(seed, spawn_key=(index,))
    rng = np.random.default_rng(child)
    engine_seed = int(rng.integers(0, 2**63 - 1))
    scenario = sample_scenario(
        rng, k=k, duration=duration,
        tmc_mode=_scenario_tmc(tmc, index),
        scenario_id=_scenario_name(index), seed=engine_seed,
    )
    sim_log = run_scenario(scenario)
    return index, dump_scenario(scenario) + dump_log(sim_log)


def _log_path(out_dir, index):
    return os.path.join(out_dir, LOGS_DIR, f"{_scenario_name(index)}.jsonl")


def _read_scenario_file(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    first, _, rest = text.partition("\n")
    return load_scenario(first), load_log(rest)


def cmd_simulate(config, args):
    _write_config_echo(config)
    os.makedirs(os.path.join(config.out_dir, LOGS_DIR), exist_ok=True)
    pending = []
    skipped = 0
    for index in range(config.scenarios):
        path = _log_path(config.out_dir, index)
        if os.path.exists(path):
            try:
                _read_scenario_file(path)
                skipped += 1
                continue
            except (DataError, OSError):
                log.warning("rerunning unreadable log %s", path)
        pending.append((config.seed, index, config.k, config.duration, config.tmc))

    if config.jobs == 1:
        results = map(_simulate_one, pending)
    else:
        pool = ProcessPoolExecutor(max_workers=config.jobs)
        results = pool.map(_simulate_one, pending)
    written = []
    for index, text in results:
        path = _log_path(config.out_dir, index)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        written.append(index)
    if config.jobs != 1:
        pool.shutdown()

    rels = [
        os.path.join(LOGS_DIR, f"{_scenario_name(i)}.jsonl")
        for i in range(config.scenarios)
    ]
    update_manifest(config.out_dir, rels)
    print(
        f"simulated {len(written)} scenarios ({skipped} already present) "
        f"-> {os.path.join(config.out_dir, LOGS_DIR)}"
    )
    return 0


# ------------------------------------------------------------- build-dataset


def cmd_build_dataset(config, args):
    _write_config_echo(config)
    logs_dir = os.path.join(config.out_dir, LOGS_DIR)
    if not os.path.isdir(logs_dir):
        raise DataError(f"no scenario logs under {logs_dir}; run simulate first")
    names = sorted(n for n in os.listdir(logs_dir) if n.endswith(".jsonl"))
    if not names:
        raise DataError(f"no scenario logs under {logs_dir}; run simulate first")
    records = []
    excluded = 0
    for name in names:
        scenario, sim_log = _read_scenario_file(os.path.join(logs_dir, name))
        window = (scenario.duration - config.window, scenario.duration)
        try:
            records.append(build_record(sim_log, scenario, window))
        except DataError as err:
            excluded += 1
            log.warning("excluding %s: %s", sim_log.scenario_id, err)
    dataset_path = os.path.join(config.out_dir, DATASET_FILE)
    write_dataset(dataset_path, records, window=config.window, tmc_mode=config.tmc)
    update_manifest(config.out_dir, [DATASET_FILE])
    print(f"dataset: {len(records)} records ({excluded} excluded) -> {dataset_path}")
    if records:
        mu_e = np.mean([r.target.mu_e for r in records])
        mu_w = np.mean([r.target.mu_w for r in records])
        vol = np.mean(
            [r.covariates.volume_e + r.covariates.volume_w for r in records]
        )
        print(
            f"targets: mean east {mu_e:.1f}s, mean west {mu_w:.1f}s, "
            f"mean corridor volume {vol:.1f} vehicles"
        )
    return 0


# --------------------------------------------------------------------- train


def _load_records(config):
    path = os.path.join(config.out_dir, DATASET_FILE)
    if not os.path.exists(path):
        raise DataError(f"dataset {path} not found; run build-dataset first")
    records, meta = read_dataset(path)
    return records, meta


def cmd_train(config, args):
    _write_config_echo(config)
    records, _ = _load_records(config)
    resume_text = None
    if getattr(args, "resume", False):
        last = os.path.join(config.out_dir, LAST_CHECKPOINT)
        if not os.path.exists(last):
            raise DataError(f"cannot resume: {last} not found")
        with open(last, encoding="utf-8") as fh:
            resume_text = fh.read()
    result = train(records, config.train, resume_text=resume_text)
    best_path = os.path.join(config.out_dir, BEST_CHECKPOINT)
    last_path = os.path.join(config.out_dir, LAST_CHECKPOINT)
    report_path = os.path.join(config.out_dir, TRAIN_REPORT)
    if result.best_checkpoint is not None:
        with open(best_path, "w", encoding="utf-8") as fh:
            fh.write(result.best_checkpoint)
    with open(last_path, "w", encoding="utf-8") as fh:
        fh.write(result.last_checkpoint)
    write_report(result.report, report_path)
    rels = [LAST_CHECKPOINT, TRAIN_REPORT]
    if result.best_checkpoint is not None:
        rels.append(BEST_CHECKPOINT)
    update_manifest(config.out_dir, rels)
    final = result.report.epochs[-1]
    print(
        f"trained {len(result.report.epochs)} epochs; "
        f"best epoch {result.report.best_epoch}; "
        f"final val losses inf={final.val_inf:.4f} "
        f"mean={final.val_mean:.4f} stdv={final.val_stdv:.4f}"
    )
    print(f"checkpoints -> {last_path}")
    return 0


# ------------------------------------------------------------------ evaluate


def _test_split(config, records):
    _, _, test = split_dataset(records, config.train.fractions, config.train.seed)
    return test


def _load_model(config, args):
    if getattr(args, "oracle", False):
        log.info("scoring the perfect-oracle predictor")
        return PerfectPredictor()
    path = getattr(args, "checkpoint", None) or os.path.join(
        config.out_dir, BEST_CHECKPOINT
    )
    if not os.path.exists(path):
        raise DataError(f"checkpoint {path} not found; run train first")
    model, _ = read_checkpoint(path)
    return model


def cmd_evaluate(config, args):
    _write_config_echo(config)
    records, _ = _load_records(config)
    test = _test_split(config, records)
    model = _load_model(config, args)
    report = evaluate(model, test)
    table = render_metric_table(report.rows)
    metrics_path = os.path.join(config.out_dir, METRICS_FILE)
    with open(metrics_path, "w", encoding="utf-8") as fh:
        fh.write(table)
    series_path = os.path.join(config.out_dir, SERIES_FILE)
    with open(series_path, "w", encoding="utf-8") as fh:
        fh.write(dump_series(report))
    update_manifest(config.out_dir, [METRICS_FILE, SERIES_FILE])
    sys.stdout.write(table)
    print(f"metric table -> {metrics_path}")
    return 0


# ------------------------------------------------------------------- predict


def cmd_predict(config, args):
    records, _ = _load_records(config)
    model = _load_model(config, args)
    wanted = getattr(args, "record", None)
    if wanted is None:
        record = records[0]
    else:
        matches = [r for r in records if r.scenario_id == wanted]
        if not matches:
            raise DataError(f"record {wanted!r} not in dataset")
        record = matches[0]
    pred = model.predict(record)
    payload = {
        "id": record.scenario_id,
        "mu_east": pred.mu_e, "sigma_east": pred.sigma_e,
        "mu_west": pred.mu_w, "sigma_west": pred.sigma_w,
        "pdf_east": [float(v) for v in pred.pdf_e],
        "pdf_west": [float(v) for v in pred.pdf_w],
    }
    json.dump(payload, sys.stdout, sort_keys=True)
    sys.stdout.write("\n")
    return 0


# ---------------------------------------------------------------------- plot


def cmd_plot(config, args):
    series_path = os.path.join(config.out_dir, SERIES_FILE)
    if not os.path.exists(series_path):
        raise DataError(f"{series_path} not found; run evaluate first")
    with open(series_path, encoding="utf-8") as fh:
        curves, _ = load_series(fh.read())
    plots_dir = os.path.join(config.out_dir, PLOTS_DIR)
    paths = write_plots(curves, plots_dir)
    update_manifest(
        config.out_dir,
        [os.path.join(PLOTS_DIR, os.path.basename(p)) for p in paths],
    )
    print(f"wrote {len(paths)} plots -> {plots_dir}")
    return 0


# ---------------------------------------------------------------- entrypoint


COMMANDS = {
    "simulate": cmd_simulate,
    "build-dataset": cmd_build_dataset,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "plot": cmd_plot,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="artery",
        description="simulate signalized corridors and learn travel-time distributions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help="run directory (overrides config)")
        sp.add_argument("--seed", type=int, help="pipeline seed")
        sp.add_argument("--jobs", type=int, help="simulation worker processes")
        sp.add_argument(
            "--window", type=int, choices=WINDOW_CHOICES,
            help="detector aggregation window in seconds",
        )
        sp.add_argument("--tmc", choices=TMC_CHOICES, help="turning-count mode")
        sp.add_argument(
            "--log-level", default="INFO",
            choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        )
        return sp

    sp = common("simulate", "sample scenarios and run the microsimulation")
    sp.add_argument("--count", type=int, help="number of scenarios")
    common("build-dataset", "turn scenario logs into a graph dataset")
    sp = common("train", "fit the three networks on the dataset")
    sp.add_argument("--epochs", type=int, help="training epochs")
    sp.add_argument(
        "--resume", action="store_true",
        help="continue from the last checkpoint in the run directory",
    )
    sp = common("evaluate", "score a checkpoint on the test split")
    sp.add_argument("--checkpoint", help="checkpoint path (default: run best)")
    sp.add_argument("--oracle", action="store_true", help=argparse.SUPPRESS)
    sp = common("predict", "emit the two predicted density vectors for one record")
    sp.add_argument("--checkpoint", help="checkpoint path (default: run best)")
    sp.add_argument("--record", help="scenario id (default: first record)")
    common("plot", "render actual-vs-predicted SVG charts")
    return parser


def _resolve_config(args):
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    for key in ("seed", "jobs", "window", "tmc"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "count", None) is not None:
        overrides["scenarios"] = args.count
    train_overrides = {}
    if getattr(args, "epochs", None) is not None:
        train_overrides["epochs"] = args.epochs
    return load_config(args.config, overrides, train_overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = _resolve_config(args)
        return COMMANDS[args.command](config, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except ArteryError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
