"""
File formats.

Dataset CSV
    Header row, first column ``y``, remaining columns covariates.  UTF-8,
    LF line endings, floats written in shortest round-trip form.

Model JSON
    ``{"format": "fmrcc-model", "version": 1, "names": [...],
    "params": {weights, intercepts, coefficients (p x H), dispersions},
    "state": {"z": H x p x p, "r": H x p x p}, "config": {...},
    "standardization": null | {"columns": [...], "mean": [...], "scale": [...]},
    "converged": bool, "em_iterations": int}``
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .model import Dataset, DomainError, ParameterSet
from .solver import AdmmState, FitConfig

MODEL_FORMAT = "fmrcc-model"
MODEL_VERSION = 1


class FormatError(ValueError):
    pass


def fmt_float(v) -> str:
    return repr(float(v))


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def dataset_to_csv(data: Dataset) -> str:
    lines = [",".join(["y", *data.names])]
    for y, row in zip(data.responses, data.design):
        lines.append(",".join([fmt_float(y), *map(fmt_float, row)]))
    return "\n".join(lines) + "\n"


def write_dataset(path, data: Dataset) -> None:
    write_text(path, dataset_to_csv(data))


def read_dataset(path) -> Dataset:
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "y":
        raise FormatError(f"{path}: line 1: first column must be 'y'")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise FormatError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            values.append([float(v) for v in row])
        except ValueError as exc:
            raise FormatError(f"{path}: line {lineno}: {exc}") from None
    if not values:
        raise FormatError(f"{path}: no data rows")
    arr = np.array(values)
    bad = np.flatnonzero(~(arr[:, 0] > 0))
    if bad.size:
        raise FormatError(f"{path}: line {bad[0] + 2}: response must be positive")
    return Dataset(arr[:, 0], arr[:, 1:], header[1:])


def model_to_dict(params: ParameterSet, state: AdmmState, names, config: FitConfig,
                  standardization=None, converged=None, em_iterations=None) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "names": list(names),
        "params": params.to_dict(),
        "state": {"z": state.z.tolist(), "r": state.r.tolist()},
        "config": config.to_dict(),
        "standardization": standardization,
        "converged": converged,
        "em_iterations": em_iterations,
    }


def write_json(path, obj) -> None:
    write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_model(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if doc.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path}: not a model file")
    try:
        doc["params"] = ParameterSet.from_dict(doc["params"])
        doc["state"] = AdmmState(np.array(doc["state"]["z"], dtype=float),
                                 np.array(doc["state"]["r"], dtype=float))
        doc["config"] = FitConfig(**doc["config"])
    except (KeyError, TypeError, DomainError) as exc:
        raise FormatError(f"{path}: malformed model: {exc}") from None
    return doc


def trace_to_csv(trace, H: int) -> str:
    cols = ["iteration", "objective", "loglik", "delta_B"]
    for h in range(1, H + 1):
        cols += [f"weight_{h}", f"pri_{h}", f"dual_{h}", f"admm_iters_{h}"]
    lines = [",".join(cols)]
    for rec in trace:
        row = [str(rec.iteration), fmt_float(rec.objective), fmt_float(rec.loglik), fmt_float(rec.delta_B)]
        for h in range(H):
            row += [fmt_float(rec.weights[h]), fmt_float(rec.pri[h]), fmt_float(rec.dual[h]), str(rec.admm_iters[h])]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
