"""Structured experiment reports with deterministic JSON/CSV emission."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError

TABLE_KINDS = ("rate", "count", "scalar")


@dataclass
class MetricTable:
    name: str
    kind: str                   # rate | count | scalar
    rows: list[str]
    cols: list[str]
    values: list[list[float]]
    counts: list[list[int]]     # sample count behind each cell

    def __post_init__(self):
        if self.kind not in TABLE_KINDS:
            raise ConfigError(f"table kind must be one of {TABLE_KINDS}, got {self.kind!r}")
        shape = (len(self.rows), len(self.cols))
        vals = np.asarray(self.values, dtype=np.float64)
        cnts = np.asarray(self.counts)
        if vals.shape != shape or cnts.shape != shape:
            raise ConfigError(
                f"table {self.name!r}: values {vals.shape} / counts {cnts.shape} "
                f"do not match declared {shape}"
            )
        finite = vals[np.isfinite(vals)]
        if self.kind == "rate" and finite.size and (finite.min() < 0 or finite.max() > 1):
            raise ConfigError(f"table {self.name!r}: rates must lie in [0, 1]")
        if cnts.size and cnts.min() < 0:
            raise ConfigError(f"table {self.name!r}: counts must be non-negative")
        self.values = [[float(v) for v in row] for row in np.atleast_2d(vals)]
        self.counts = [[int(c) for c in row] for row in np.atleast_2d(cnts)]


def table_from_matrix(name: str, kind: str, matrix, counts, rows=None, cols=None) -> MetricTable:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    counts = np.broadcast_to(np.asarray(counts), matrix.shape)
    r, c = matrix.shape
    return MetricTable(
        name=name,
        kind=kind,
        rows=[str(x) for x in (rows if rows is not None else range(r))],
        cols=[str(x) for x in (cols if cols is not None else range(c))],
        values=matrix.tolist(),
        counts=counts.tolist(),
    )


@dataclass
class EvalReport:
    experiment_id: str
    config: dict
    tables: list[MetricTable] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def add_table(self, table: MetricTable) -> None:
        if any(t.name == table.name for t in self.tables):
            raise ConfigError(f"duplicate table name {table.name!r}")
        self.tables.append(table)

    def table(self, name: str) -> MetricTable:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)


def _nan_to_none(values):
    return [[None if (isinstance(v, float) and math.isnan(v)) else v for v in row]
            for row in values]


def _none_to_nan(values):
    return [[math.nan if v is None else float(v) for v in row] for row in values]


def report_to_dict(report: EvalReport) -> dict:
    return {
        "experiment_id": report.experiment_id,
        "config": report.config,
        "provenance": report.provenance,
        "tables": [
            {
                "name": t.name,
                "kind": t.kind,
                "rows": t.rows,
                "cols": t.cols,
                "values": _nan_to_none(t.values),
                "counts": t.counts,
            }
            for t in report.tables
        ],
    }


def report_from_dict(doc: dict) -> EvalReport:
    return EvalReport(
        experiment_id=doc["experiment_id"],
        config=doc["config"],
        provenance=doc.get("provenance", {}),
        tables=[
            MetricTable(
                name=t["name"],
                kind=t["kind"],
                rows=list(t["rows"]),
                cols=list(t["cols"]),
                values=_none_to_nan(t["values"]),
                counts=t["counts"],
            )
            for t in doc.get("tables", [])
        ],
    )


def load_report(path) -> EvalReport:
    with open(path, "r", encoding="utf-8") as f:
        return report_from_dict(json.load(f))


def _flatten(prefix: str, obj, out: list):
    if isinstance(obj, dict):
        for key in sorted(obj):
            _flatten(f"{prefix}.{key}" if prefix else str(key), obj[key], out)
    elif isinstance(obj, (list, tuple)):
        out.append((prefix, json.dumps(list(obj))))
    else:
        out.append((prefix, obj))


def emit_report(report: EvalReport, path, fmt: str = "json") -> list[str]:
    """Write the report; returns the file paths produced.

    JSON emits one document at ``path``.  CSV treats ``path`` as a stem and
    writes one config-echo file plus value and count files per table
    (RFC-4180 line endings, UTF-8, header row).  Emission is a pure
    function of the report, so re-emitting is byte-identical.
    """
    if fmt == "json":
        blob = json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(blob)
        return [str(path)]
    if fmt != "csv":
        raise ConfigError(f"format must be 'json' or 'csv', got {fmt!r}")
    stem, ext = os.path.splitext(str(path))
    if ext.lower() == ".csv":
        path = stem
    paths = []

    def write_csv(suffix, header, data_rows):
        out = f"{path}-{suffix}.csv"
        with open(out, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\r\n")
            writer.writerow(header)
            writer.writerows(data_rows)
        paths.append(out)

    echo: list = [("experiment_id", report.experiment_id)]
    _flatten("config", report.config, echo)
    _flatten("provenance", report.provenance, echo)
    write_csv("config", ["key", "value"], echo)
    for t in report.tables:
        write_csv(t.name, [""] + t.cols,
                  [[r] + vals for r, vals in zip(t.rows, t.values)])
        write_csv(f"{t.name}-counts", [""] + t.cols,
                  [[r] + cnts for r, cnts in zip(t.rows, t.counts)])
    return paths
