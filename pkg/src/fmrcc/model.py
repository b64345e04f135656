"""
Gamma mixture regression: densities, mean function and penalized objective.

Gamma densities use the mean/dispersion parameterization

    shape = 1 / phi**2,    scale = mu * phi**2,

so that ``E[Y] = mu`` and ``Var[Y] = mu**2 * phi**2``.  Component means are
tied to covariates through a log link, ``mu_h(x) = exp(beta0_h + x @ beta_h)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

ETA_LIMIT = 700.0


class DomainError(ValueError):
    """Raised when an argument lies outside the support of a density or model."""


class LinearPredictorOverflow(OverflowError):
    """Raised when ``|eta|`` exceeds the exponentiation guard."""

    def __init__(self, eta):
        self.eta = eta
        super().__init__(
            f"linear predictor {eta!r} exceeds |eta| <= {ETA_LIMIT:g}; "
            "exp(eta) would saturate"
        )


@dataclass(frozen=True)
class GammaParams:
    mu: float
    phi: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise DomainError(f"mu must be positive and finite, got {self.mu}")
        if not (np.isfinite(self.phi) and self.phi > 0):
            raise DomainError(f"phi must be positive and finite, got {self.phi}")

    @property
    def shape(self) -> float:
        return 1.0 / self.phi**2

    @property
    def scale(self) -> float:
        return self.mu * self.phi**2


@dataclass
class ParameterSet:
    """
    Parameters of an H-component Gamma mixture regression.

    Attributes
    ----------
    weights : ndarray, shape (H,)
        Mixing proportions, positive and summing to one.
    intercepts : ndarray, shape (H,)
    coefficients : ndarray, shape (p, H)
        Column ``h`` holds the covariate effects of component ``h``.
    dispersions : ndarray, shape (H,)
    """

    weights: np.ndarray
    intercepts: np.ndarray
    coefficients: np.ndarray
    dispersions: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.intercepts = np.asarray(self.intercepts, dtype=float).reshape(-1)
        self.coefficients = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        self.dispersions = np.asarray(self.dispersions, dtype=float).reshape(-1)
        H = self.weights.size
        if H < 1:
            raise DomainError("need at least one component")
        if self.intercepts.size != H or self.dispersions.size != H:
            raise DomainError("weights, intercepts and dispersions must have equal length")
        if self.coefficients.shape[1] != H:
            raise DomainError(
                f"coefficient matrix must be p x H with H={H}, got {self.coefficients.shape}"
            )
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise DomainError(f"weights must be positive and sum to 1, got {self.weights}")
        if np.any(~np.isfinite(self.dispersions)) or np.any(self.dispersions <= 0):
            raise DomainError(f"dispersions must be positive, got {self.dispersions}")
        if not (np.all(np.isfinite(self.intercepts)) and np.all(np.isfinite(self.coefficients))):
            raise DomainError("intercepts and coefficients must be finite")

    @property
    def H(self) -> int:
        return self.weights.size

    @property
    def p(self) -> int:
        return self.coefficients.shape[0]

    def copy(self) -> "ParameterSet":
        return ParameterSet(
            self.weights.copy(),
            self.intercepts.copy(),
            self.coefficients.copy(),
            self.dispersions.copy(),
        )

    def permuted(self, order: Sequence[int]) -> "ParameterSet":
        """Return the same mixture with components relabelled as ``order``."""
        order = np.asarray(order)
        return ParameterSet(
            self.weights[order],
            self.intercepts[order],
            self.coefficients[:, order],
            self.dispersions[order],
        )

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "intercepts": self.intercepts.tolist(),
            "coefficients": self.coefficients.tolist(),
            "dispersions": self.dispersions.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterSet":
        return cls(d["weights"], d["intercepts"], d["coefficients"], d["dispersions"])


@dataclass
class Dataset:
    responses: np.ndarray
    design: np.ndarray
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.responses = np.asarray(self.responses, dtype=float).reshape(-1)
        self.design = np.asarray(self.design, dtype=float)
        if self.design.ndim == 1:
            self.design = self.design.reshape(-1, 1)
        if self.design.shape[0] != self.responses.size:
            raise DomainError(
                f"design has {self.design.shape[0]} rows but there are "
                f"{self.responses.size} responses"
            )
        bad = np.flatnonzero(~(self.responses > 0))
        if bad.size:
            raise DomainError(f"responses must be strictly positive (row {bad[0]})")
        if not self.names:
            self.names = [f"x{j + 1}" for j in range(self.design.shape[1])]
        elif len(self.names) != self.design.shape[1]:
            raise DomainError("one name per design column is required")
        self.names = list(self.names)

    @property
    def n(self) -> int:
        return self.responses.size

    @property
    def p(self) -> int:
        return self.design.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.responses[idx], self.design[idx], self.names)


def check_similarity(S, p: int | None = None) -> np.ndarray:
    """Validate a covariate similarity matrix and return it as a float array."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DomainError(f"similarity matrix must be square, got shape {S.shape}")
    if p is not None and S.shape[0] != p:
        raise DomainError(f"similarity matrix is {S.shape[0]}x{S.shape[0]}, expected p={p}")
    if np.any(S < 0) or not np.all(np.isfinite(S)):
        raise DomainError("similarity entries must be finite and nonnegative")
    if not np.array_equal(S, S.T):
        raise DomainError("similarity matrix must be symmetric")
    if np.any(np.diag(S) != 0):
        raise DomainError("similarity matrix must have a zero diagonal")
    return S


def gamma_log_density(y, mu, phi):
    """
    Log density of the Gamma distribution with mean ``mu`` and dispersion ``phi``.

    Broadcasts over array arguments.  Raises :class:`DomainError` for
    non-positive ``y``, ``mu`` or ``phi``.
    """
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(~(y > 0)):
        raise DomainError("y must be strictly positive")
    if np.any(~(mu > 0)) or np.any(~np.isfinite(mu)):
        raise DomainError("mu must be positive and finite")
    if np.any(~(phi > 0)) or np.any(~np.isfinite(phi)):
        raise DomainError("phi must be positive and finite")
    shape = 1.0 / phi**2
    scale = mu * phi**2
    out = (shape - 1.0) * np.log(y) - y / scale - shape * np.log(scale) - gammaln(shape)
    return out[()] if out.ndim == 0 else out


def gamma_rng(mu, phi, size=None, rng=None):
    """Gamma draws with mean ``mu`` and dispersion ``phi`` (scaled standard Gamma variates)."""
    rng = np.random.default_rng(rng)
    mu = np.asarray(mu, dtype=float)
    shape = 1.0 / np.asarray(phi, dtype=float) ** 2
    return rng.standard_gamma(shape, size=size) * mu / shape


def mean_from_linear_predictor(beta0, beta, x):
    """exp(beta0 + x @ beta), refusing to exponentiate |eta| > 700."""
    eta = beta0 + np.asarray(x, dtype=float) @ np.asarray(beta, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise DomainError(f"non-finite linear predictor {eta!r}")
    big = np.abs(eta) > ETA_LIMIT
    if np.any(big):
        raise LinearPredictorOverflow(np.asarray(eta)[big].ravel()[0] if np.ndim(eta) else eta)
    return np.exp(eta)


def component_means(X, params: ParameterSet) -> np.ndarray:
    """(n, H) matrix of component means for an (n, p) design."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return mean_from_linear_predictor(params.intercepts, params.coefficients, X)


def weighted_component_log_densities(y, X, params: ParameterSet) -> np.ndarray:
    """(n, H) matrix of ``log w_h + log f(y_i | mu_h(x_i), phi_h)``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mu = component_means(X, params)
    return np.log(params.weights) + gamma_log_density(y[:, None], mu, params.dispersions)


def mixture_log_density(y, x, params: ParameterSet):
    """
    Log of the mixture density ``sum_h w_h f(y | mu_h(x), phi_h)``.

    ``y`` may be a scalar with ``x`` a p-vector, or an n-vector with ``x`` an
    (n, p) matrix; the result has the matching shape.
    """
    scalar = np.ndim(y) == 0
    X = np.atleast_2d(np.asarray(x, dtype=float))
    out = logsumexp(weighted_component_log_densities(y, X, params), axis=1)
    return float(out[0]) if scalar else out


def log_likelihood(data: Dataset, params: ParameterSet) -> float:
    return float(np.sum(mixture_log_density(data.responses, data.design, params)))


def fused_penalty(coefficients, S) -> np.ndarray:
    """Per-component ``sum_{j,k} s_jk |b_jh - b_kh|`` over all ordered pairs."""
    B = np.atleast_2d(coefficients)
    diffs = np.abs(B[:, None, :] - B[None, :, :])
    return np.einsum("jk,jkh->h", np.asarray(S, dtype=float), diffs)


def penalized_objective(data: Dataset, params: ParameterSet, S, gamma: float, v: float) -> float:
    """
    Log-likelihood minus the weighted ridge and similarity-fusion penalties.

    ``l(Psi) - gamma * sum_h w_h ||b_h||^2
    - (v/2) * sum_h w_h sum_{j,k} s_jk |b_jh - b_kh|``
    """
    if data.p != params.p:
        raise DomainError(f"dataset has p={data.p} covariates, parameters have p={params.p}")
    S = check_similarity(S, params.p)
    if gamma < 0 or v < 0:
        raise DomainError("penalty parameters must be nonnegative")
    ridge = gamma * np.sum(params.weights * np.sum(params.coefficients**2, axis=0))
    fusion = 0.5 * v * np.sum(params.weights * fused_penalty(params.coefficients, S))
    return log_likelihood(data, params) - ridge - fusion
