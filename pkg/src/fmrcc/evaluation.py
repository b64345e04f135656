"""Goodness-of-fit, accuracy and discrimination metrics for fitted mixtures."""

from __future__ import annotations

import math
import warnings
from fractions import Fraction
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammainc, ndtri
from scipy.stats import gamma as gamma_dist

from .model import Dataset, DomainError, ParameterSet, component_means, log_likelihood


class MetricError(ValueError):
    """A metric is undefined for the given inputs."""


@dataclass
class MetricReport:
    nll: float
    pseudo_r2: float
    mse: float
    mcrps: float
    lift: float

    def to_dict(self) -> dict:
        return asdict(self)


def point_prediction(x, params: ParameterSet):
    """Mixture mean ``sum_h w_h mu_h(x)`` for a p-vector or an (n, p) matrix."""
    scalar = np.ndim(x) == 1
    out = component_means(x, params) @ params.weights
    return float(out[0]) if scalar else out


def pseudo_r2(y, yhat) -> float:
    """
    Deviance-based R^2 under a Gamma model:
    ``1 - sum[log(y/yhat) - (y - yhat)/yhat] / sum log(y/ybar)``.

    The linear term is summed in exact rational arithmetic, so ``yhat = y``
    gives exactly 1 and ``yhat = ybar`` gives exactly 0 whenever ``ybar`` is
    the exact sample mean.
    """
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise MetricError("y and yhat must have the same shape")
    if np.any(y <= 0) or np.any(yhat <= 0):
        raise MetricError("pseudo R^2 needs positive observations and predictions")
    ybar = y.mean()
    den = math.fsum(np.log(y / ybar))
    if den == 0:
        raise MetricError("pseudo R^2 undefined: every observation equals the mean")
    linear = float(sum((Fraction(a) - Fraction(b)) / Fraction(b) for a, b in zip(y.tolist(), yhat.tolist())))
    num = math.fsum(np.log(y / yhat)) - linear
    return 1.0 - num / den


def _cdf_parts(params: ParameterSet, x):
    mu = component_means(x, params)[0]
    shape = 1.0 / params.dispersions**2
    scale = mu / shape
    return params.weights, shape, scale


def mixture_cdf(z, x, params: ParameterSet):
    """Mixture CDF at ``z`` (scalar or array) for a single covariate vector ``x``."""
    w, shape, scale = _cdf_parts(params, x)
    z = np.asarray(z, dtype=float)
    F = gammainc(shape, np.clip(z, 0, None)[..., None] / scale) @ w
    return F


def mixture_quantile(q: float, x, params: ParameterSet) -> float:
    w, shape, scale = _cdf_parts(params, x)
    comp = gamma_dist.ppf(q, shape, scale=scale)
    lo, hi = float(np.min(comp)), float(np.max(comp))
    if hi - lo <= 1e-12 * max(hi, 1.0):
        return hi
    return optimize.brentq(lambda t: mixture_cdf(t, x, params) - q, lo, hi, xtol=1e-12 * hi)


def crps(y: float, x, params: ParameterSet, tol: float = 1e-6) -> float:
    """
    Continuous ranked probability score of the mixture forecast at ``x``.

    ``int_0^y F(t)^2 dt + int_y^U (1 - F(t))^2 dt`` with ``U`` the
    ``1 - 1e-8`` mixture quantile.
    """
    if not y > 0:
        raise DomainError("y must be positive")
    w, shape, scale = _cdf_parts(params, x)
    upper = max(mixture_quantile(1 - 1e-8, x, params), y)
    means = shape * scale
    sds = means / np.sqrt(shape)

    def cdf(t):
        return float(gammainc(shape, t / scale) @ w)

    def left(t):
        return cdf(t) ** 2

    def right(t):
        return (1.0 - cdf(t)) ** 2

    marks = np.concatenate([means, means - 3 * sds, means + 3 * sds])
    total, err = 0.0, 0.0
    for f, a, b in ((left, 0.0, y), (right, y, upper)):
        if b <= a:
            continue
        pts = sorted(m for m in marks if a < m < b) or None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, e = integrate.quad(f, a, b, points=pts, epsabs=tol / 4, epsrel=1e-10, limit=500)
        total += val
        err += e
    if err > tol:
        raise MetricError(f"CRPS quadrature reached only {err:.3g} absolute error (target {tol:g})")
    return total


def lift(y, yhat, groups: int = 10) -> float:
    """
    Mean response in the top prediction decile over that in the bottom decile.

    Observations are ordered by ``yhat`` (ties by index) and split into
    ``groups`` contiguous groups; leftover observations go to the first groups.
    """
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.size < groups:
        raise MetricError(f"lift needs at least {groups} observations")
    order = np.argsort(yhat, kind="stable")
    bins = np.array_split(y[order], groups)
    return float(bins[-1].mean() / bins[0].mean())


def quantile_residuals(data: Dataset, params: ParameterSet, seed=None) -> np.ndarray:
    """
    Normal-scale PIT residuals ``Phi^-1(F(y_i | x_i))``.

    The response is continuous, so no randomization is applied and ``seed``
    has no effect.
    """
    w = params.weights
    mu = component_means(data.design, params)
    shape = 1.0 / params.dispersions**2
    F = gammainc(shape, data.responses[:, None] * shape / mu) @ w
    clipped = np.clip(F, 1e-12, 1 - 1e-12)
    if np.any(clipped != F):
        warnings.warn("PIT values clamped to [1e-12, 1 - 1e-12]", RuntimeWarning, stacklevel=2)
    return ndtri(clipped)


def crps_all(data: Dataset, params: ParameterSet) -> np.ndarray:
    return np.array([crps(y, x, params) for y, x in zip(data.responses, data.design)])


def report(data: Dataset, params: ParameterSet) -> MetricReport:
    yhat = point_prediction(data.design, params)
    y = data.responses
    return MetricReport(
        nll=-log_likelihood(data, params),
        pseudo_r2=pseudo_r2(y, yhat),
        mse=float(np.mean((y - yhat) ** 2)),
        mcrps=float(np.mean(crps_all(data, params))),
        lift=lift(y, yhat),
    )
