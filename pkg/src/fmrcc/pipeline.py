"""Glue used by the command line: similarity specs, standardization, fits and sweeps."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .clusters import ccp, constant_similarity_matrix, cosine_similarity_matrix, extract_clusters
from .initialization import InitConfig, initialize
from .model import Dataset, ParameterSet, check_similarity
from .solver import FitConfig, FitResult, fit

log = logging.getLogger(__name__)


def resolve_similarity(choice: str, design) -> np.ndarray:
    """``cosine``, ``constant:<value>`` or ``file:<path>`` (whitespace/comma separated)."""
    p = np.shape(design)[1]
    if choice == "cosine":
        return cosine_similarity_matrix(design)
    if choice.startswith("constant:"):
        return constant_similarity_matrix(p, float(choice.split(":", 1)[1]))
    if choice.startswith("file:"):
        path = choice.split(":", 1)[1]
        S = np.loadtxt(path, delimiter=_sniff_delimiter(path), ndmin=2)
        return check_similarity(S, p)
    raise ValueError(f"unknown similarity choice {choice!r}; use cosine, constant:<v> or file:<path>")


def _sniff_delimiter(path):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    return "," if "," in first else None


def continuous_columns(design) -> list[int]:
    """Columns that are not 0/1 indicators."""
    X = np.asarray(design)
    return [j for j in range(X.shape[1]) if not np.all(np.isin(X[:, j], (0.0, 1.0)))]


def standardization_for(data: Dataset) -> dict:
    cols = continuous_columns(data.design)
    X = data.design[:, cols]
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return {"columns": cols, "mean": X.mean(axis=0).tolist(), "scale": scale.tolist()}


def apply_standardization(data: Dataset, info: dict | None) -> Dataset:
    if not info:
        return data
    X = data.design.copy()
    cols = info["columns"]
    X[:, cols] = (X[:, cols] - np.asarray(info["mean"])) / np.asarray(info["scale"])
    return Dataset(data.responses, X, data.names)


def fit_model(data: Dataset, S, H: int, config: FitConfig, init_cfg: InitConfig | None = None,
              start: ParameterSet | None = None) -> FitResult:
    """k-means + ridge GLM initialization (unless ``start`` is given), then EM-ADMM."""
    init_cfg = init_cfg or InitConfig(seed=config.seed)
    start = start if start is not None else initialize(data, H, init_cfg)
    return fit(data, S, H, config, start)


@dataclass
class SweepPoint:
    v: float
    result: FitResult | None
    ccp: list | None = None
    error: str | None = None


def sweep(data: Dataset, S, H: int, grid, config: FitConfig, init_cfg: InitConfig | None = None,
          truth_partition=None) -> list[SweepPoint]:
    """
    Fit along ascending ``v``, each fit warm-started from the previous estimate.

    A failure at one ``v`` is recorded and the sweep continues from the last
    successful estimate.
    """
    grid = sorted(float(v) for v in grid)
    if not grid:
        raise ValueError("empty v grid")
    init_cfg = init_cfg or InitConfig(seed=config.seed)
    start = initialize(data, H, init_cfg)
    out = []
    for v in grid:
        try:
            res = fit(data, S, H, replace(config, v=v), start)
        except Exception as exc:  # recorded per grid point
            log.warning("sweep v=%g failed: %s", v, exc)
            out.append(SweepPoint(v, None, error=str(exc)))
            continue
        start = res.params
        scores = None
        if truth_partition is not None:
            scores = [ccp(part, truth_partition) for part in extract_clusters(res).partitions]
        out.append(SweepPoint(v, res, scores))
    return out
