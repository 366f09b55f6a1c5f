"""CSV ingestion/export and the JSON fit report.

Tabular files use a strict RFC-4180 subset: comma separator, ``"`` quoting
only where needed, ``\\n`` line ends, ``.`` decimal point and no thousands
separators. Floats are written with ``repr`` so a write/read cycle is exact.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..core import TaskDataset
from ..errors import DataError, MissingColumn, NonNumericCell, TooSmallTask
from .config import DataSource

__all__ = [
    "FitReport",
    "read_fit_report",
    "read_task_csv",
    "write_csv",
    "write_fit_report",
    "write_task_csv",
]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _parse_float(text, row, col):
    try:
        v = float(text)
    except ValueError:
        raise NonNumericCell(row, col, text) from None
    if not math.isfinite(v) or "_" in text:
        raise NonNumericCell(row, col, text)
    return v


def read_task_csv(path, mapping: DataSource, model: str = "plm") -> list[TaskDataset]:
    """Group rows by ``mapping.task_col`` into tasks, in order of first appearance.

    Row numbers in error messages count data rows from 1 (the header is not
    counted).
    """
    if model == "did" and len(mapping.outcome_cols) != 2:
        raise MissingColumn("DID needs two outcome columns (pre, post)")
    if model != "did" and len(mapping.outcome_cols) != 1:
        raise MissingColumn(f"{model} takes exactly one outcome column")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn(f"{path}: empty file, no header") from None
        body = list(reader)
    header = [h.strip() for h in header]
    needed = [mapping.task_col, *mapping.outcome_cols, mapping.treatment_col, *mapping.covariate_cols]
    for name in needed:
        if name not in header:
            raise MissingColumn(f"column {name!r} not found in {path}")
    covs = list(mapping.covariate_cols) or [
        h for h in header if h not in (mapping.task_col, mapping.treatment_col, *mapping.outcome_cols)
    ]
    if not covs:
        raise MissingColumn("no covariate columns")
    idx = {h: i for i, h in enumerate(header)}
    numeric = [*mapping.outcome_cols, mapping.treatment_col, *covs]

    groups: dict[str, list] = {}
    for r, row in enumerate(body, start=1):
        if not row:
            continue
        if len(row) != len(header):
            raise NonNumericCell(r, "<row>", f"{len(row)} fields, expected {len(header)}")
        key = row[idx[mapping.task_col]]
        groups.setdefault(key, []).append([_parse_float(row[idx[c]], r, c) for c in numeric])

    small = [f"{k} ({len(v)} rows)" for k, v in groups.items() if len(v) < mapping.min_rows]
    if small:
        raise TooSmallTask(f"tasks below {mapping.min_rows} rows: {', '.join(small)}")
    n_out = len(mapping.outcome_cols)
    tasks = []
    for j, (key, rows) in enumerate(groups.items()):
        M = np.array(rows)
        y = M[:, 0] if n_out == 1 else M[:, :2]
        tasks.append(TaskDataset(j, y, M[:, n_out], M[:, n_out + 1 :], label=key))
    if model in ("ate", "did"):
        for t in tasks:
            if not np.all((t.treatment == 0) | (t.treatment == 1)):
                raise DataError(f"task {t.label}: column {mapping.treatment_col!r} must be 0/1 for {model}")
    return tasks


def write_task_csv(tasks, path, mapping: DataSource | None = None) -> DataSource:
    """Export tasks in the layout :func:`read_task_csv` expects; returns the mapping."""
    tasks = list(tasks)
    two = tasks[0].outcome.ndim == 2
    p = max(t.p for t in tasks)
    if any(t.p != p for t in tasks):
        raise ValueError("tasks must share the covariate dimension to be written as one table")
    if mapping is None:
        mapping = DataSource(
            path=str(path),
            outcome_cols=("y0", "y1") if two else ("y",),
            covariate_cols=tuple(f"x{r + 1}" for r in range(p)),
        )
    header = [mapping.task_col, *mapping.outcome_cols, mapping.treatment_col, *mapping.covariate_cols]
    rows = []
    for t in tasks:
        key = t.label if t.label is not None else str(t.task_id)
        y = t.outcome.reshape(t.n, -1)
        for i in range(t.n):
            rows.append([key, *y[i], float(t.treatment[i]), *t.covariates[i]])
    write_csv(path, header, rows)
    return mapping


@dataclass
class FitReport:
    """Per-task estimates, per-cluster inference and run metadata."""

    tasks: list = field(default_factory=list)
    clusters: list = field(default_factory=list)
    penalties: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_result(cls, result, tasks, metadata) -> "FitReport":
        est = result.theta_hat
        task_rows = [
            {
                "task": t.task_id,
                "label": t.label if t.label is not None else str(t.task_id),
                "n": t.n,
                "theta_hat": [float(v) for v in est[j]],
                "cluster": int(result.labels[j]),
                "se": [float(v) for v in result.se[j]],
            }
            for j, t in enumerate(tasks)
        ]
        cl = [
            {
                "cluster_id": ci.cluster_id,
                "members": list(ci.members),
                "N_k": ci.N_k,
                "estimate": ci.estimate.tolist(),
                "se": ci.se.tolist(),
                "ci_lo": ci.ci_lo.tolist(),
                "ci_hi": ci.ci_hi.tolist(),
                "level": ci.level,
                "Psi_hat": ci.Psi_hat.tolist(),
                "Omega_hat": ci.Omega_hat.tolist(),
            }
            for ci in result.inference
        ]
        pen = [
            {"j": j, "k": k, "lambda": lam, "provenance": prov}
            for j, k, lam, prov in result.penalties.rows()
        ]
        return cls(task_rows, cl, pen, dict(metadata))

    def to_json(self) -> str:
        doc = {"tasks": self.tasks, "clusters": self.clusters, "penalties": self.penalties, "metadata": self.metadata}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FitReport":
        doc = json.loads(text)
        return cls(doc["tasks"], doc["clusters"], doc["penalties"], doc["metadata"])


def write_fit_report(report: FitReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json())


def read_fit_report(path) -> FitReport:
    with open(path, encoding="utf-8") as fh:
        return FitReport.from_json(fh.read())


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()
