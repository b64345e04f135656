"""Starting values: 1-D k-means on the response, then a ridge Gamma GLM per group."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import Dataset, ParameterSet
from .solver import ComponentObjective, SolverWarning, pack
from .optim import bfgs


@dataclass
class InitConfig:
    kmeans_restarts: int = 10
    kmeans_max_iter: int = 100
    ridge_gamma: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.kmeans_restarts < 1:
            raise ValueError("kmeans_restarts must be at least 1")
        if self.kmeans_max_iter < 1:
            raise ValueError("kmeans_max_iter must be at least 1")
        if self.ridge_gamma < 0:
            raise ValueError("ridge_gamma must be nonnegative")


def _plusplus(y, H, rng):
    centers = [y[rng.integers(y.size)]]
    for _ in range(1, H):
        d2 = np.min((y[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total == 0:
            centers.append(y[rng.integers(y.size)])
        else:
            centers.append(y[rng.choice(y.size, p=d2 / total)])
    return np.array(centers, dtype=float)


def _lloyd(y, centers, max_iter):
    H = centers.size
    labels = None
    for _ in range(max_iter):
        new = np.argmin(np.abs(y[:, None] - centers[None, :]), axis=1)
        for h in range(H):
            if not np.any(new == h):
                # reseed at the point farthest from its assigned centroid
                far = np.argmax(np.abs(y - centers[new]))
                centers[h] = y[far]
                new[far] = h
        centers = np.array([y[new == h].mean() for h in range(H)])
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    sse = float(np.sum((y - centers[labels]) ** 2))
    return labels, centers, sse


def kmeans_1d(y, H: int, cfg: InitConfig | None = None):
    """
    Lloyd's algorithm on a 1-D sample, best of ``cfg.kmeans_restarts``.

    Clusters are relabelled by ascending mean.  Returns ``(labels, weights)``
    where ``weights`` are the cluster proportions.
    """
    cfg = cfg or InitConfig()
    y = np.asarray(y, dtype=float).reshape(-1)
    if H < 1 or H > np.unique(y).size:
        raise ValueError(f"cannot form {H} clusters from {np.unique(y).size} distinct values")
    rng = np.random.default_rng(cfg.seed)
    best = None
    for _ in range(cfg.kmeans_restarts):
        labels, centers, sse = _lloyd(y, _plusplus(y, H, rng), cfg.kmeans_max_iter)
        if best is None or sse < best[2]:
            best = (labels, centers, sse)
    labels, centers, _ = best
    order = np.argsort(centers, kind="stable")
    rank = np.empty(H, dtype=int)
    rank[order] = np.arange(H)
    labels = rank[labels]
    weights = np.bincount(labels, minlength=H) / y.size
    return labels, weights


def moment_dispersion(y, mu, p_eff=1, pi=None) -> float:
    """Method-of-moments dispersion, sqrt of the Pearson statistic, phi^2 clamped to [1e-3, 10]."""
    pi = np.ones_like(y) if pi is None else pi
    dof = max(pi.sum() - p_eff, 1.0)
    phi2 = float(np.sum(pi * ((y - mu) / mu) ** 2) / dof)
    return float(np.sqrt(np.clip(phi2, 1e-3, 10.0)))


def fit_ridge_glm(data: Dataset, ridge_gamma: float, pi=None):
    """
    Ridge-penalized Gamma log-link GLM by BFGS, dispersion estimated jointly.

    Returns ``(beta0, beta, phi, intercept_only)``.
    """
    y, X = data.responses, data.design
    pi = np.ones(data.n) if pi is None else np.asarray(pi, dtype=float)
    ybar = float(np.sum(pi * y) / pi.sum())
    phi0 = moment_dispersion(y, ybar, 1, pi)
    if pi.sum() < 2 or np.ptp(y[pi > 0]) == 0:
        return np.log(ybar), np.zeros(data.p), phi0, True
    obj = ComponentObjective(X, y, pi, 1.0, ridge_gamma, 0.0)
    res = bfgs(obj, pack(np.log(ybar), np.zeros(data.p), phi0))
    if not res.ok:
        warnings.warn("ridge GLM initial fit did not converge", SolverWarning, stacklevel=2)
    return float(res.x[0]), res.x[1:-1].copy(), float(np.exp(res.x[-1])), False


def initial_params(data: Dataset, labels, H: int, cfg: InitConfig | None = None) -> ParameterSet:
    """Fit one ridge GLM per k-means group and assemble a ParameterSet."""
    cfg = cfg or InitConfig()
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=H)
    if counts.size != H or np.any(counts == 0):
        raise ValueError(f"every subgroup must be nonempty, sizes {counts.tolist()}")
    b0, B, phi = np.zeros(H), np.zeros((data.p, H)), np.zeros(H)
    for h in range(H):
        b0[h], B[:, h], phi[h], _ = fit_ridge_glm(data.subset(labels == h), cfg.ridge_gamma)
    return ParameterSet(counts / counts.sum(), b0, B, phi)


def initialize(data: Dataset, H: int, cfg: InitConfig | None = None) -> ParameterSet:
    cfg = cfg or InitConfig()
    labels, _ = kmeans_1d(data.responses, H, cfg)
    return initial_params(data, labels, H, cfg)
