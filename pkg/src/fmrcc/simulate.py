"""
Synthetic two-component Gamma mixture regression data.

Covariates are multivariate normal with a block-diagonal covariance:
``var`` on the diagonal, ``var * varrho`` within a block and zero across
blocks.  Each response is drawn from component 1 when a uniform draw falls
below ``w_1`` and from the next component otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Dataset, ParameterSet, gamma_rng


def paper_truth() -> ParameterSet:
    """Reference mixture: two components, ten covariates in two blocks of five."""
    b1 = [-0.1] * 5 + [-0.2] * 5
    b2 = [0.1] * 5 + [0.2] * 5
    return ParameterSet(
        weights=[0.7, 0.3],
        intercepts=[1.0, 2.0],
        coefficients=np.column_stack([b1, b2]),
        dispersions=[0.2, 0.1],
    )


@dataclass
class SimConfig:
    n: int = 1000
    p: int = 10
    block_sizes: list = field(default_factory=lambda: [5, 5])
    varrho: float = 0.9
    var: float = 0.04
    truth: ParameterSet = field(default_factory=paper_truth)
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if sum(self.block_sizes) != self.p or any(b < 1 for b in self.block_sizes):
            raise ValueError(f"block_sizes {self.block_sizes} must be positive and sum to p={self.p}")
        if not 0 <= self.varrho < 1:
            raise ValueError(f"varrho must lie in [0, 1), got {self.varrho}")
        if not self.var > 0:
            raise ValueError(f"var must be positive, got {self.var}")
        if self.truth.p != self.p:
            raise ValueError(f"truth has p={self.truth.p}, config has p={self.p}")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "block_sizes": list(self.block_sizes),
            "varrho": self.varrho,
            "var": self.var,
            "truth": self.truth.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        if "truth" in d and d["truth"] is not None:
            d["truth"] = ParameterSet.from_dict(d["truth"])
        else:
            d.pop("truth", None)
        return cls(**d)


def block_partition(block_sizes) -> list[list[int]]:
    out, start = [], 0
    for b in block_sizes:
        out.append(list(range(start, start + b)))
        start += b
    return out


def block_covariance(block_sizes, varrho, var=0.04) -> np.ndarray:
    p = sum(block_sizes)
    cov = np.zeros((p, p))
    for block in block_partition(block_sizes):
        idx = np.ix_(block, block)
        cov[idx] = var * varrho
    cov[np.diag_indices(p)] = var
    return cov


def generate(cfg: SimConfig):
    """
    Draw one dataset.

    Returns
    -------
    data : Dataset
    labels : ndarray of int, shape (n,)
        Zero-based generating component of each observation.
    partition : list of list of int
        The true covariate blocks (zero-based indices).
    """
    cov = block_covariance(cfg.block_sizes, cfg.varrho, cfg.var)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariate covariance is not positive definite") from exc
    rng = np.random.default_rng(cfg.seed)
    X = rng.standard_normal((cfg.n, cfg.p)) @ L.T
    u = rng.uniform(size=cfg.n)
    cum = np.cumsum(cfg.truth.weights)
    labels = np.minimum(np.searchsorted(cum, u, side="right"), cfg.truth.H - 1)
    truth = cfg.truth
    mu = np.exp(truth.intercepts[labels] + np.einsum("ij,ji->i", X, truth.coefficients[:, labels]))
    y = gamma_rng(mu, truth.dispersions[labels], rng=rng)
    names = [f"x{j + 1}" for j in range(cfg.p)]
    return Dataset(y, X, names), labels, block_partition(cfg.block_sizes)


def replication_seeds(seed: int, count: int) -> list[int]:
    """Independent per-replication seeds spawned from one root seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]
