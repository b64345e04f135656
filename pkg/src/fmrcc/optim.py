"""Small dense BFGS with backtracking Armijo line search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class BFGSResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    inv_hessian: np.ndarray
    nit: int
    status: str  # "converged", "precision", "maxiter", "linesearch"

    @property
    def ok(self) -> bool:
        return self.status in ("converged", "precision", "maxiter")


def bfgs(fun_grad, x0, inv_hessian=None, gtol=1e-6, max_iter=200, c1=1e-4, max_backtrack=60):
    """
    Minimize ``fun_grad(x) -> (f, g)`` by BFGS.

    Starts from ``inv_hessian`` when given (warm start), otherwise from the
    identity, rescaled after the first accepted step.  Returns the last
    accepted iterate; ``status == "linesearch"`` means no Armijo step could
    be found while the gradient was still large.  ``fun_grad`` may return
    ``inf`` to reject a trial point.
    """
    x = np.array(x0, dtype=float)
    f, g = fun_grad(x)
    if not np.isfinite(f):
        raise ValueError("BFGS started at a point with non-finite objective")
    fresh = inv_hessian is None
    Hk = np.eye(x.size) if fresh else np.array(inv_hessian, dtype=float)
    status = "maxiter"
    nit = 0
    stalls = 0
    for nit in range(max_iter + 1):
        if np.max(np.abs(g)) <= gtol:
            status = "converged"
            break
        if nit == max_iter:
            break
        d = -Hk @ g
        slope = g @ d
        if slope >= 0:
            # lost positive definiteness; fall back to steepest descent
            Hk = np.eye(x.size)
            fresh = True
            d = -g
            slope = -(g @ g)
        t = 1.0
        accepted = False
        for _ in range(max_backtrack):
            x_new = x + t * d
            f_new, g_new = fun_grad(x_new)
            if np.isfinite(f_new) and f_new <= f + c1 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # no representable decrease left: at the precision floor, or stuck
            tiny = np.max(np.abs(g)) <= 1e-6 * max(1.0, abs(f))
            status = "precision" if tiny else "linesearch"
            break
        s = x_new - x
        yv = g_new - g
        sy = s @ yv
        # decrease below a few ulps of f: further progress is roundoff
        flat = f - f_new <= 8 * np.finfo(float).eps * max(1.0, abs(f))
        stalls = stalls + 1 if flat and np.max(np.abs(g_new)) <= 1e-6 * max(1.0, abs(f)) else 0
        x, f, g = x_new, f_new, g_new
        if stalls >= 2:
            status = "precision"
            break
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            if fresh:
                Hk = np.eye(x.size) * (sy / (yv @ yv))
                fresh = False
            rho = 1.0 / sy
            Hy = Hk @ yv
            Hk = Hk + ((sy + yv @ Hy) * rho * rho) * np.outer(s, s) - rho * (
                np.outer(Hy, s) + np.outer(s, Hy)
            )
    return BFGSResult(x, float(f), g, Hk, nit, status)
