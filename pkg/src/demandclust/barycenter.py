"""Soft-DTW barycenters by BFGS minimisation of the summed soft distances."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sdtw import _check_gamma, _cross_values, _family_value_grad

DEFAULT_MAX_ITER = 100
DEFAULT_GRAD_TOL = 1e-5


@dataclass(frozen=True)
class BarycenterResult:
    center: np.ndarray
    objective: float
    initial_objective: float
    iterations: int
    converged: bool
    gradient_norm: float
    history: tuple = ()


def _family(family) -> np.ndarray:
    if isinstance(family, np.ndarray) and family.ndim == 2:
        Y = family
    else:
        rows = [np.asarray(getattr(f, "values", f), dtype=np.float64).reshape(-1) for f in family]
        if not rows:
            raise ValueError("barycenter of an empty family is undefined")
        if len({r.size for r in rows}) != 1:
            raise ValueError("family members must share one length")
        Y = np.vstack(rows)
    if Y.shape[0] == 0:
        raise ValueError("barycenter of an empty family is undefined")
    if not np.all(np.isfinite(Y)):
        raise ValueError("family contains non-finite values")
    return np.ascontiguousarray(Y, dtype=np.float64)


def barycenter_objective(x, family, gamma: float = 1.0) -> tuple[float, np.ndarray]:
    """Sum of soft-DTW values from ``x`` to every family member, with gradient."""
    gamma = _check_gamma(gamma)
    Y = _family(family)
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64).reshape(-1))
    value, grad = _family_value_grad(x, Y, gamma)
    return float(value), grad


def _canonical_order(Y: np.ndarray) -> np.ndarray:
    # Summation order is fixed by content so that permuting the family
    # yields a bitwise identical result.
    return Y[np.lexsort(Y.T[::-1])]


def _initial_point(Y: np.ndarray, init, gamma: float) -> np.ndarray:
    if isinstance(init, str):
        if init == "euclidean_mean":
            return Y.mean(axis=0)
        if init == "medoid":
            cost = _cross_values(Y, Y, gamma).sum(axis=1)
            return Y[int(np.argmin(cost))].copy()
        raise ValueError(f"unknown init {init!r}")
    x0 = np.asarray(init, dtype=np.float64).reshape(-1)
    if x0.size != Y.shape[1]:
        raise ValueError(f"init has length {x0.size}, family members {Y.shape[1]}")
    return x0.copy()


def bfgs(fun, x0: np.ndarray, max_iter: int = DEFAULT_MAX_ITER,
         grad_tol: float = DEFAULT_GRAD_TOL, c1: float = 1e-4, shrink: float = 0.5,
         max_backtracks: int = 60):
    """Minimise ``fun`` (returning value and gradient) with BFGS.

    Steps are chosen by Armijo backtracking, so every accepted step strictly
    lowers the objective. The inverse-Hessian update is skipped whenever the
    curvature condition ``s.y > 0`` fails.

    Returns ``(x, f, g, n_iter, converged, history)``.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise FloatingPointError(f"objective not finite at the initial point (f={f})")
    n = x.size
    H = np.eye(n)
    history = [f]
    scaled = False
    it = 0
    while it < max_iter:
        if np.max(np.abs(g)) <= grad_tol:
            return x, f, g, it, True, history
        p = -H @ g
        slope = float(g @ p)
        if slope >= 0:
            # lost descent direction; restart from steepest descent
            H = np.eye(n)
            scaled = False
            p = -g
            slope = float(g @ p)
        t = 1.0
        for _ in range(max_backtracks):
            x_new = x + t * p
            f_new, g_new = fun(x_new)
            if np.isfinite(f_new) and f_new <= f + c1 * t * slope:
                break
            t *= shrink
        else:
            raise FloatingPointError(
                f"line search failed after {max_backtracks} backtracks "
                f"(f={f:.6g}, slope={slope:.3g}, last trial f={f_new:.6g})")
        if not np.all(np.isfinite(g_new)):
            raise FloatingPointError("non-finite gradient during line search")
        s = x_new - x
        yv = g_new - g
        sy = float(s @ yv)
        it += 1
        if f_new >= f:
            # step too small to change f in floating point
            x, f, g = x_new, min(f, f_new), g_new
            history.append(f)
            return x, f, g, it, bool(np.max(np.abs(g)) <= grad_tol), history
        x, f, g = x_new, f_new, g_new
        history.append(f)
        if sy > 1e-12 * np.sqrt(float(s @ s) * float(yv @ yv)):
            if not scaled:
                H = np.eye(n) * (sy / float(yv @ yv))
                scaled = True
            rho = 1.0 / sy
            Hy = H @ yv
            H = (H - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                 + (rho * rho * float(yv @ Hy) + rho) * np.outer(s, s))
    return x, f, g, it, bool(np.max(np.abs(g)) <= grad_tol), history


def compute_barycenter(family, init="euclidean_mean", gamma: float = 1.0,
                       max_iter: int = DEFAULT_MAX_ITER,
                       grad_tol: float = DEFAULT_GRAD_TOL) -> BarycenterResult:
    """Series minimising the summed soft-DTW distance to ``family``.

    The problem is non-convex; the local minimum reached from ``init`` is
    returned together with its objective and gradient infinity-norm.
    """
    gamma = _check_gamma(gamma)
    Y = _canonical_order(_family(family))
    x0 = _initial_point(Y, init, gamma)

    def fun(x):
        return _family_value_grad(x, Y, gamma)

    x, f, g, n_iter, converged, history = bfgs(fun, x0, max_iter=max_iter, grad_tol=grad_tol)
    return BarycenterResult(center=x, objective=float(f), initial_objective=float(history[0]),
                            iterations=n_iter, converged=converged,
                            gradient_norm=float(np.max(np.abs(g))), history=tuple(history))
