"""Bound-constrained smooth optimization used by the solvers.

The workhorse is scipy's limited-memory projected quasi-Newton
(L-BFGS-B) behind a thin wrapper that enforces a projected-gradient
convergence check, plus a vectorized projected-gradient maximizer for
large batches of independent low-dimensional problems (one per
approximation node).
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

__all__ = ["SolverError", "minimize_box", "projected_gradient_norm", "maximize_batch"]


class SolverError(RuntimeError):
    """Optimizer failed to converge; carries the best iterate found."""

    def __init__(self, message, best_x=None, best_f=None):
        super().__init__(message)
        self.best_x = best_x
        self.best_f = best_f


def projected_gradient_norm(x, g, lower, upper):
    """Sup-norm of the gradient projected onto the feasible box."""
    step = np.clip(x - g, lower, upper) - x
    return float(np.max(np.abs(step))) if len(step) else 0.0


def minimize_box(fun_grad, x0, lower, upper, tol=1e-6, max_iter=5000, callback=None):
    """Minimize a smooth function over a box to projected-gradient tolerance.

    ``fun_grad(x) -> (f, g)``.  Returns (x, f, n_iter).  Raises
    SolverError with the best iterate on non-convergence.
    """
    x0 = np.clip(np.asarray(x0, dtype=float), lower, upper)
    bounds = list(zip(lower, upper))
    res = minimize(
        fun_grad,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        callback=callback,
        options={"maxiter": max_iter, "maxfun": 20 * max_iter, "ftol": 1e-18, "gtol": tol * 1e-2},
    )
    x = np.clip(res.x, lower, upper)
    f, g = fun_grad(x)
    pg = projected_gradient_norm(x, g, lower, upper)
    if pg > tol:
        raise SolverError(
            f"projected gradient {pg:.3e} above tolerance {tol:.1e} "
            f"after {res.nit} iterations ({res.message})",
            best_x=x,
            best_f=f,
        )
    return x, f, int(res.nit)


def maximize_batch(
    fun_grad,
    x0,
    lower,
    upper,
    tol=1e-8,
    max_iter=60,
    armijo=1e-4,
):
    """Maximize many independent smooth objectives over a shared box.

    ``x0`` has shape (N, d); ``fun_grad(X, idx) -> (f, g)`` evaluates the
    problems selected by index array ``idx`` (``None`` means all) at the
    rows of X, returning f of shape (len(idx),) and g of shape
    (len(idx), d).  Projected gradient ascent with per-problem
    Barzilai-Borwein steps and Armijo backtracking.  Returns (X, f, pg)
    where pg is the final per-problem projected-gradient sup-norm.
    """
    X = np.clip(np.asarray(x0, dtype=float), lower, upper)
    f, g = fun_grad(X, None)
    step = np.full(len(X), 1.0)
    X_prev = None
    g_prev = None
    for _ in range(max_iter):
        pg = np.max(np.abs(np.clip(X + g, lower, upper) - X), axis=1)
        active = pg > tol
        if not active.any():
            break
        if X_prev is not None:
            dx = X - X_prev
            dg = g - g_prev
            num = np.sum(dx * dx, axis=1)
            den = -np.sum(dx * dg, axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                bb = np.where(den > 1e-300, num / den, 1.0)
            step = np.clip(bb, 1e-8, 1e8)
        X_prev, g_prev = X, g
        # backtracking on the active problems
        alpha = step.copy()
        X_new = X.copy()
        f_new = f.copy()
        g_new = g.copy()
        remaining = active.copy()
        for _bt in range(40):
            idx = np.where(remaining)[0]
            if len(idx) == 0:
                break
            cand = np.clip(X[idx] + alpha[idx, None] * g[idx], lower, upper)
            fc, gc = fun_grad(cand, idx)
            decrease = np.sum((cand - X[idx]) * g[idx], axis=1)
            ok = fc >= f[idx] + armijo * decrease
            stuck = np.all(cand == X[idx], axis=1)
            accept = ok | stuck
            acc = idx[accept]
            X_new[acc] = cand[accept]
            f_new[acc] = fc[accept]
            g_new[acc] = gc[accept]
            remaining[acc] = False
            alpha[idx[~accept]] *= 0.25
        X, f, g = X_new, f_new, g_new
    pg = np.max(np.abs(np.clip(X + g, lower, upper) - X), axis=1)
    return X, f, pg
