"""Dataset persistence: one header line plus one JSON line per record.

Serialization is canonical (sorted keys, no whitespace) and lossless
for float64 values, so rebuilding a dataset from the same logs and
configuration produces byte-identical files.  The header carries the
record count, which makes truncation detectable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .graphs import (
    D_DYNAMIC,
    D_EDGE,
    N_BINS,
    Covariates,
    DatasetRecord,
    DynamicGraph,
    StaticGraph,
    TravelTimeTarget,
)

DATASET_SCHEMA = "artery-dataset/1"


@dataclass(frozen=True)
class DatasetMeta:
    k: int
    d_edge: int
    window: float
    tmc_mode: str
    count: int


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def record_to_dict(rec: DatasetRecord) -> dict:
    return {
        "type": "record",
        "id": rec.scenario_id,
        "static": {
            "x": rec.static.x.tolist(),
            "e": rec.static.e.tolist(),
            "mask": rec.static.mask.tolist(),
            "edge_src": rec.static.edge_src.tolist(),
            "edge_dst": rec.static.edge_dst.tolist(),
            "edge_dir": rec.static.edge_dir.tolist(),
        },
        "dynamic": {
            "xp": rec.dynamic.xp.tolist(),
            "ep": rec.dynamic.ep.tolist(),
        },
        "target": {
            "mu_e": rec.target.mu_e,
            "sigma_e": rec.target.sigma_e,
            "mu_w": rec.target.mu_w,
            "sigma_w": rec.target.sigma_w,
            "pdf_e": rec.target.pdf_e.tolist(),
            "pdf_w": rec.target.pdf_w.tolist(),
        },
        "covariates": {
            "cycle": rec.covariates.cycle,
            "volume_e": rec.covariates.volume_e,
            "volume_w": rec.covariates.volume_w,
            "green_pct_e": rec.covariates.green_pct_e,
            "green_pct_w": rec.covariates.green_pct_w,
        },
    }


def _shaped(values, shape, what):
    arr = np.asarray(values, dtype=float)
    if arr.shape != shape:
        raise DataError(f"{what} has shape {arr.shape}, expected {shape}")
    return arr


def record_from_dict(d: dict, k: int, d_edge: int) -> DatasetRecord:
    st = d["static"]
    dy = d["dynamic"]
    tg = d["target"]
    cv = d["covariates"]
    edge_src = np.asarray(st["edge_src"], dtype=np.int64)
    edge_dst = np.asarray(st["edge_dst"], dtype=np.int64)
    edge_dir = np.asarray(st["edge_dir"], dtype=np.int64)
    if not (edge_src.shape == edge_dst.shape == edge_dir.shape == (2 * k,)):
        raise DataError(f"edge arrays must have {2 * k} entries")
    static = StaticGraph(
        x=_shaped(st["x"], (k, 8), "static x"),
        e=_shaped(st["e"], (2 * k, d_edge), "static e"),
        mask=_shaped(st["mask"], (k, 8), "mask"),
        edge_src=edge_src, edge_dst=edge_dst, edge_dir=edge_dir,
    )
    dynamic = DynamicGraph(
        xp=_shaped(dy["xp"], (k, D_DYNAMIC), "dynamic xp"),
        ep=_shaped(dy["ep"], (2 * k, d_edge), "dynamic ep"),
        edge_src=edge_src, edge_dst=edge_dst, edge_dir=edge_dir,
    )
    target = TravelTimeTarget(
        mu_e=float(tg["mu_e"]), sigma_e=float(tg["sigma_e"]),
        mu_w=float(tg["mu_w"]), sigma_w=float(tg["sigma_w"]),
        pdf_e=_shaped(tg["pdf_e"], (N_BINS,), "pdf_e"),
        pdf_w=_shaped(tg["pdf_w"], (N_BINS,), "pdf_w"),
    )
    covariates = Covariates(
        cycle=float(cv["cycle"]),
        volume_e=int(cv["volume_e"]),
        volume_w=int(cv["volume_w"]),
        green_pct_e=float(cv["green_pct_e"]),
        green_pct_w=float(cv["green_pct_w"]),
    )
    return DatasetRecord(
        scenario_id=d["id"], static=static, dynamic=dynamic,
        target=target, covariates=covariates,
    )


def dump_dataset(records, window, tmc_mode) -> str:
    if records:
        k = records[0].static.k
        d_edge = records[0].static.e.shape[1]
    else:
        k, d_edge = 0, D_EDGE
    lines = [
        _dumps(
            {
                "type": "header",
                "schema": DATASET_SCHEMA,
                "k": k,
                "d_e": d_edge,
                "window": window,
                "tmc_mode": tmc_mode,
                "count": len(records),
            }
        )
    ]
    lines.extend(_dumps(record_to_dict(r)) for r in records)
    return "\n".join(lines) + "\n"


def load_dataset(text: str):
    """(records, meta); errors name the failing record index."""
    meta = None
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if meta is None:
            try:
                d = json.loads(line)
                if d.get("type") != "header":
                    raise DataError("dataset does not start with a header line")
                if d.get("schema") != DATASET_SCHEMA:
                    raise DataError(
                        f"unsupported dataset schema {d.get('schema')!r}, "
                        f"expected {DATASET_SCHEMA!r}"
                    )
                meta = DatasetMeta(
                    k=d["k"], d_edge=d["d_e"], window=d["window"],
                    tmc_mode=d["tmc_mode"], count=d["count"],
                )
            except DataError:
                raise
            except (json.JSONDecodeError, KeyError, TypeError) as err:
                raise DataError(f"corrupt dataset header: {err}") from err
            continue
        index = len(records)
        try:
            d = json.loads(line)
            if d.get("type") != "record":
                raise DataError(f"unexpected line type {d.get('type')!r}")
            records.append(record_from_dict(d, meta.k, meta.d_edge))
        except DataError as err:
            raise DataError(f"record {index} (line {lineno}): {err}") from err
        except (json.JSONDecodeError, KeyError, TypeError) as err:
            raise DataError(f"record {index} (line {lineno}): {err}") from err
    if meta is None:
        raise DataError("empty dataset file")
    if len(records) != meta.count:
        raise DataError(
            f"dataset is truncated: header promises {meta.count} records, "
            f"found {len(records)}"
        )
    return records, meta


def write_dataset(path, records, window, tmc_mode):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_dataset(records, window, tmc_mode))


def read_dataset(path):
    with open(path, encoding="utf-8") as fh:
        return load_dataset(fh.read())
