"""
EM-ADMM estimation of a Gamma mixture regression with covariate fusion.

The outer loop is EM: responsibilities, then mixing weights, then one
M-step per component.  Each M-step is a scaled ADMM over the split
``z[j, k] = beta[j]``:

* beta-step: BFGS on the weighted negative log-likelihood + ridge + the
  ADMM quadratic, jointly in ``(beta0, beta, log phi)``;
* z-step: closed-form pairwise shrinkage (fuses a pair when theta = 0.5);
* r-step: scaled dual ascent.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import digamma, gammaln

from .model import (
    ETA_LIMIT,
    Dataset,
    DomainError,
    ParameterSet,
    check_similarity,
    log_likelihood,
    penalized_objective,
    weighted_component_log_densities,
)
from .optim import bfgs

log = logging.getLogger(__name__)


class FitError(RuntimeError):
    """A sub-step failed; ``trace`` holds the EM records completed so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


class SolverWarning(UserWarning):
    pass


@dataclass
class FitConfig:
    gamma: float = 0.001
    v: float = 0.0
    rho: float = 1.0
    max_em: int = 10
    max_admm: int = 100
    eps_pri: float = 0.05
    eps_dual: float = 0.05
    eps_em: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if self.v < 0:
            raise ValueError(f"v must be nonnegative, got {self.v}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.max_em < 1 or self.max_admm < 1:
            raise ValueError("max_em and max_admm must be at least 1")
        for name in ("eps_pri", "eps_dual", "eps_em"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdmmState:
    """Auxiliary copies ``z[h, j, k]`` and scaled duals ``r[h, j, k]``."""

    z: np.ndarray
    r: np.ndarray

    @classmethod
    def initial(cls, coefficients) -> "AdmmState":
        B = np.atleast_2d(coefficients)
        p, H = B.shape
        z = np.repeat(B.T[:, :, None], p, axis=2)
        return cls(z, np.zeros((H, p, p)))

    def permuted(self, order) -> "AdmmState":
        return AdmmState(self.z[order].copy(), self.r[order].copy())


@dataclass
class EMRecord:
    iteration: int
    objective: float
    loglik: float
    weights: list
    pri: list
    dual: list
    admm_iters: list
    delta_B: float
    frozen: list = field(default_factory=list)
    lagrangian: list = field(default_factory=list)


@dataclass
class FitResult:
    params: ParameterSet
    state: AdmmState
    trace: list
    iterations_used: int
    converged: bool
    config: FitConfig | None = None

    @property
    def admm_iterations(self) -> list:
        return [rec.admm_iters for rec in self.trace]


# --------------------------------------------------------------------------
# E-step and weights


def e_step(data: Dataset, params: ParameterSet) -> np.ndarray:
    """Posterior component memberships, shape (n, H); rows sum to one."""
    L = weighted_component_log_densities(data.responses, data.design, params)
    top = np.max(L, axis=1, keepdims=True)
    bad = np.flatnonzero(~np.isfinite(top[:, 0]))
    if bad.size:
        raise DomainError(f"all component densities underflow for observation {bad[0]}")
    W = np.exp(L - top)
    return W / W.sum(axis=1, keepdims=True)


def update_weights(pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    return pi.mean(axis=0)


# --------------------------------------------------------------------------
# beta-step


class ComponentObjective:
    """
    ``g(beta0, beta, log phi)`` for one component at fixed responsibilities.

    Only the ADMM quadratic depends on ``(z, r)``; it enters through the row
    sums ``c_j = sum_k (z_jk + r_jk)`` and the constant ``sum (z + r)**2``.
    """

    def __init__(self, X, y, pi, weight, gamma, rho):
        self.X = X
        self.y = y
        self.pi = pi
        self.wy = pi * y
        self.spi = pi.sum()
        self.spi_logy = pi @ np.log(y)
        self.ridge = weight * gamma
        self.rho = rho
        self.p = X.shape[1]
        self.c = np.zeros(self.p)
        self.qconst = 0.0

    def set_anchor(self, z, r):
        q = z + r
        self.c = q.sum(axis=1)
        self.qconst = float(np.sum(q * q))

    def nll(self, beta0, beta, logphi):
        eta = beta0 + self.X @ beta
        alpha = np.exp(-2.0 * logphi)
        return -(
            alpha * np.log(alpha) * self.spi
            + (alpha - 1.0) * self.spi_logy
            - alpha * (self.wy @ np.exp(-eta))
            - alpha * (self.pi @ eta)
            - gammaln(alpha) * self.spi
        )

    def quadratic(self, beta):
        return 0.5 * self.rho * (self.p * (beta @ beta) - 2.0 * (beta @ self.c) + self.qconst)

    def __call__(self, theta):
        beta0 = theta[0]
        beta = theta[1:-1]
        logphi = theta[-1]
        eta = beta0 + self.X @ beta
        if np.max(np.abs(eta)) > ETA_LIMIT or abs(logphi) > 20:
            return np.inf, None
        alpha = np.exp(-2.0 * logphi)
        e = np.exp(-eta)
        wye = self.wy @ e
        peta = self.pi @ eta
        ll = (
            alpha * np.log(alpha) * self.spi
            + (alpha - 1.0) * self.spi_logy
            - alpha * wye
            - alpha * peta
            - gammaln(alpha) * self.spi
        )
        f = -ll + self.ridge * (beta @ beta) + self.quadratic(beta)
        # d(-ll)/d eta_i = -pi_i * alpha * (y_i / mu_i - 1)
        geta = alpha * (self.pi - self.wy * e)
        grad = np.empty_like(theta)
        grad[0] = geta.sum()
        grad[1:-1] = (
            self.X.T @ geta + 2.0 * self.ridge * beta + self.rho * (self.p * beta - self.c)
        )
        dll_dalpha = (
            (np.log(alpha) + 1.0 - digamma(alpha)) * self.spi + self.spi_logy - wye - peta
        )
        grad[-1] = 2.0 * alpha * dll_dalpha
        return float(f), grad


@dataclass
class BetaStep:
    beta0: float
    beta: np.ndarray
    phi: float
    ok: bool
    inv_hessian: np.ndarray
    nit: int


def pack(beta0, beta, phi):
    return np.concatenate(([beta0], np.asarray(beta, dtype=float), [np.log(phi)]))


def admm_beta_step(data, pi_h, state_h, current, weight, config, *, objective=None, inv_hessian=None):
    """
    Approximate minimizer of the ADMM beta-subproblem for one component.

    Parameters
    ----------
    data : Dataset
    pi_h : ndarray, shape (n,)
        Responsibilities of this component.
    state_h : (z, r)
        Current p x p auxiliary and scaled dual matrices.
    current : (beta0, beta, phi)
        Warm start.
    weight : float
        Current mixing weight, scaling the ridge penalty.
    config : FitConfig
    objective : ComponentObjective, optional
        Reused across ADMM iterations to skip precomputation.
    inv_hessian : ndarray, optional
        BFGS inverse-Hessian carried over from the previous ADMM iteration.

    Returns
    -------
    BetaStep
        ``ok`` is False when the line search stalled; the returned point is
        then the last accepted iterate.
    """
    if objective is None:
        objective = ComponentObjective(
            data.design, data.responses, np.asarray(pi_h, dtype=float), weight,
            config.gamma, config.rho,
        )
    z, r = state_h
    objective.set_anchor(z, r)
    beta0, beta, phi = current
    res = bfgs(objective, pack(beta0, beta, phi), inv_hessian=inv_hessian)
    if not res.ok:
        warnings.warn(
            f"BFGS line search stalled after {res.nit} iterations "
            f"(|grad|_inf={np.max(np.abs(res.grad)):.3g})",
            SolverWarning,
            stacklevel=2,
        )
    x = res.x
    return BetaStep(float(x[0]), x[1:-1].copy(), float(np.exp(x[-1])), res.ok, res.inv_hessian, res.nit)


# --------------------------------------------------------------------------
# z-step, r-step, residuals


def fusion_theta(beta, r, S, weight, v, rho):
    """Pairwise shrinkage weights theta_jk (0.5 means the pair is fused)."""
    A = np.asarray(beta, dtype=float)[:, None] - r
    d = np.abs(A - A.T)
    lam = weight * v * np.asarray(S, dtype=float)
    ratio = np.divide(lam, rho * d, out=np.zeros_like(d), where=d > 0)
    theta = np.maximum(1.0 - ratio, 0.5)
    theta[d == 0] = 0.5
    return theta


def admm_z_step(beta, r, S, weight, v, rho):
    """
    Closed-form auxiliary update.

    With ``a_jk = beta_j - r_jk`` the pair ``(z_jk, z_kj)`` minimizes
    ``w v s_jk |z_jk - z_kj| + rho/2 ((z_jk - a_jk)^2 + (z_kj - a_kj)^2)``;
    its solution is ``z_jk = theta a_jk + (1 - theta) a_kj``.
    """
    A = np.asarray(beta, dtype=float)[:, None] - r
    theta = fusion_theta(beta, r, S, weight, v, rho)
    return theta * A + (1.0 - theta) * A.T


def admm_r_step(r, z, beta):
    return r + (z - np.asarray(beta, dtype=float)[:, None])


def admm_residuals(state_now, state_prev, rho):
    """Primal ``||r - r_prev||_F`` and dual ``rho ||z - z_prev||_F``."""
    z, r = state_now
    z0, r0 = state_prev
    return float(np.linalg.norm(r - r0)), float(rho * np.linalg.norm(z - z0))


def augmented_lagrangian(objective, theta, z, r, S, weight, v):
    """Scaled-form augmented Lagrangian with constant ``-rho/2 ||r||^2``."""
    beta0, beta, logphi = theta[0], theta[1:-1], theta[-1]
    fuse = 0.5 * weight * v * np.sum(S * np.abs(z - z.T))
    quad = 0.5 * objective.rho * np.sum((z - beta[:, None] + r) ** 2)
    return float(
        objective.nll(beta0, beta, logphi)
        + objective.ridge * (beta @ beta)
        + fuse
        + quad
        - 0.5 * objective.rho * np.sum(r * r)
    )


# --------------------------------------------------------------------------
# M-step for one component


@dataclass
class ComponentUpdate:
    beta0: float
    beta: np.ndarray
    phi: float
    z: np.ndarray
    r: np.ndarray
    pri: float
    dual: float
    iters: int
    frozen: bool
    lagrangian: list


def run_component(data, pi_h, weight, start, S, config, track_lagrangian=False):
    """Scaled ADMM for one component's M-step (Steps 1-5)."""
    beta0, beta, phi = start
    beta = np.array(beta, dtype=float)
    p = beta.size
    if weight < 1e-6 or pi_h.sum() < p:
        z = np.repeat(beta[:, None], p, axis=1)
        return ComponentUpdate(beta0, beta, phi, z, np.zeros((p, p)), 0.0, 0.0, 0, True, [])
    obj = ComponentObjective(data.design, data.responses, pi_h, weight, config.gamma, config.rho)
    z = np.repeat(beta[:, None], p, axis=1)
    r = np.zeros((p, p))
    inv_h = None
    pri = dual = np.inf
    lag = []
    t = 0
    for t in range(1, config.max_admm + 1):
        step = admm_beta_step(
            data, pi_h, (z, r), (beta0, beta, phi), weight, config,
            objective=obj, inv_hessian=inv_h,
        )
        beta0, beta, phi, inv_h = step.beta0, step.beta, step.phi, step.inv_hessian
        z_new = admm_z_step(beta, r, S, weight, config.v, config.rho)
        r_new = admm_r_step(r, z_new, beta)
        pri, dual = admm_residuals((z_new, r_new), (z, r), config.rho)
        z, r = z_new, r_new
        if track_lagrangian:
            lag.append(augmented_lagrangian(obj, pack(beta0, beta, phi), z, r, S, weight, config.v))
        if pri <= config.eps_pri and dual <= config.eps_dual:
            break
    return ComponentUpdate(beta0, beta, phi, z, r, pri, dual, t, False, lag)


# --------------------------------------------------------------------------
# EM driver


def fit(
    data: Dataset,
    S,
    H: int,
    config: FitConfig,
    init: ParameterSet,
    *,
    n_jobs: int = 1,
    track_lagrangian: bool = False,
) -> FitResult:
    """
    Run EM-ADMM from ``init``.

    Stops when ``||B_new - B_old||_F < eps_em`` or after ``max_em`` EM
    iterations.  With ``n_jobs > 1`` the per-component M-steps run on a
    thread pool; results do not depend on execution order.
    """
    if H < 1 or init.H != H:
        raise DomainError(f"init has {init.H} components, H={H} requested")
    if init.p != data.p:
        raise DomainError(f"init has p={init.p}, data has p={data.p}")
    S = check_similarity(S, data.p)
    params = init.copy()
    state = AdmmState.initial(params.coefficients)
    trace: list[EMRecord] = []
    converged = False
    pool = ThreadPoolExecutor(max_workers=n_jobs) if n_jobs > 1 else None
    try:
        for m in range(config.max_em):
            try:
                pi = e_step(data, params)
                weights = update_weights(pi)

                def work(h):
                    start = (params.intercepts[h], params.coefficients[:, h], params.dispersions[h])
                    return run_component(
                        data, pi[:, h], weights[h], start, S, config, track_lagrangian
                    )

                updates = list(pool.map(work, range(H))) if pool else [work(h) for h in range(H)]
                # an emptied component keeps a tiny positive weight
                weights = np.maximum(weights, 1e-300)
                weights = weights / weights.sum()
                new = ParameterSet(
                    weights,
                    [u.beta0 for u in updates],
                    np.column_stack([u.beta for u in updates]),
                    [u.phi for u in updates],
                )
            except Exception as exc:
                raise FitError(f"EM iteration {m + 1} failed: {exc}", trace) from exc
            frozen = [h for h, u in enumerate(updates) if u.frozen]
            if frozen:
                warnings.warn(f"components {frozen} degenerate; parameters frozen", SolverWarning)
            delta = float(np.linalg.norm(new.coefficients - params.coefficients))
            params = new
            state = AdmmState(np.stack([u.z for u in updates]), np.stack([u.r for u in updates]))
            trace.append(
                EMRecord(
                    iteration=m + 1,
                    objective=penalized_objective(data, params, S, config.gamma, config.v),
                    loglik=log_likelihood(data, params),
                    weights=params.weights.tolist(),
                    pri=[u.pri for u in updates],
                    dual=[u.dual for u in updates],
                    admm_iters=[u.iters for u in updates],
                    delta_B=delta,
                    frozen=frozen,
                    lagrangian=[u.lagrangian for u in updates],
                )
            )
            log.debug("EM %d: objective=%.6f dB=%.4g", m + 1, trace[-1].objective, delta)
            if delta < config.eps_em:
                converged = True
                break
    finally:
        if pool:
            pool.shutdown()
    return FitResult(params, state, trace, len(trace), converged, config)
