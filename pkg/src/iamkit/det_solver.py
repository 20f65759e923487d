"""Deterministic finite-horizon optimal control by direct transcription.

Decisions are parameterized as per-period savings rates and emission
control rates so that all constraints are simple bounds.  Gradients of
total welfare come from a backward adjoint sweep through the transition
laws; the same adjoint multipliers yield the social cost of carbon as a
ratio of shadow prices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    Decision,
    DomainError,
    ExogenousPaths,
    FeasibilityError,
    ModelParams,
    StateVector,
    carbon_tax,
)
from .optimize import SolverError, minimize_box, projected_gradient_norm

__all__ = [
    "Horizon",
    "Trajectory",
    "rollout_adjoint",
    "solve_deterministic",
    "objective_gradient",
    "refine_from_coarse",
    "scc_deterministic",
    "S_MIN",
    "S_MAX",
]

S_MIN, S_MAX = 1e-3, 0.999


@dataclass(frozen=True)
class Horizon:
    """Truncation of the infinite-horizon program.

    ``terminal_rule`` is "continuation" (fixed-savings zero-emission
    rollout for ``continuation_periods`` more periods) or "zero".
    """

    n_periods: int
    step_years: float = 5.0
    terminal_rule: str = "continuation"
    continuation_periods: int = 80
    terminal_consumption_share: float = 0.78

    def __post_init__(self):
        if self.n_periods < 1:
            raise DomainError("horizon must have at least 1 period")
        if self.terminal_rule not in ("continuation", "zero"):
            raise DomainError(f"unknown terminal rule {self.terminal_rule!r}")

    @property
    def total_periods(self) -> int:
        if self.terminal_rule == "continuation":
            return self.n_periods + self.continuation_periods
        return self.n_periods


@dataclass
class Trajectory:
    """A solved (or candidate) decision path with its replayed states."""

    states: list
    decisions: list
    s_path: np.ndarray
    mu_path: np.ndarray
    welfare: float
    scc_path: np.ndarray
    tax_path: np.ndarray
    iterations: int = 0
    converged: bool = True


def _check_lengths(paths: ExogenousPaths, horizon: Horizon):
    if len(paths) < horizon.total_periods:
        raise DomainError(
            f"exogenous paths length {len(paths)} shorter than "
            f"{horizon.total_periods} required periods"
        )


def rollout_adjoint(
    params: ModelParams,
    paths: ExogenousPaths,
    horizon: Horizon,
    init_state: StateVector,
    s_path,
    mu_path,
    tip_damage=None,
    zeta_path=None,
    need_gradient=True,
):
    """Forward rollout plus backward adjoint sweep.

    Returns a dict with per-period arrays (K, M, T, Y, Yhat, C, E,
    welfare) and, when requested, the welfare gradient with respect to
    (s_path, mu_path) and the shadow prices lam_K, lam_MAT (indexed by
    state time, i.e. lam_K[t] = dW/dK_t).
    """
    _check_lengths(paths, horizon)
    n = horizon.n_periods
    n_tot = horizon.total_periods
    s_path = np.asarray(s_path, dtype=float)
    mu_path = np.asarray(mu_path, dtype=float)
    if len(s_path) != n or len(mu_path) != n:
        raise DomainError("decision paths must have horizon length")
    dmg = np.zeros(n_tot) if tip_damage is None else np.asarray(tip_damage, dtype=float)
    zeta = np.ones(n_tot) if zeta_path is None else np.asarray(zeta_path, dtype=float)

    a, th2 = params.alpha, params.theta2
    p_ut = 1.0 - 1.0 / params.psi
    log_mode = params.log_utility or abs(params.psi - 1.0) < 1e-12
    share = horizon.terminal_consumption_share

    K = np.empty(n_tot + 1)
    M = np.empty((n_tot + 1, 3))
    T = np.empty((n_tot + 1, 2))
    K[0], M[0], T[0] = init_state.K, init_state.M, init_state.T
    Y = np.empty(n_tot)
    omega = np.empty(n_tot)
    phi = np.empty(n_tot)
    Yhat = np.empty(n_tot)
    C = np.empty(n_tot)
    E = np.empty(n_tot)
    s_full = np.empty(n_tot)
    mu_full = np.empty(n_tot)
    s_full[:n], mu_full[:n] = s_path, mu_path
    s_full[n:], mu_full[n:] = 1.0 - share, 0.0

    W = 0.0
    for t in range(n_tot):
        main = t < n
        Y[t] = paths.A[t] * zeta[t] * K[t] ** a * paths.L[t] ** (1.0 - a)
        denom = 1.0 + params.pi1 * T[t, 0] + params.pi2 * T[t, 0] ** 2
        if params.weitzman:
            denom += params.pi_hi * abs(T[t, 0]) ** params.exp_hi
        omega[t] = (1.0 - dmg[t]) / denom
        theta1 = paths.theta1[t] if main else 0.0
        phi[t] = omega[t] - theta1 * mu_full[t] ** th2
        Yhat[t] = phi[t] * Y[t]
        if Yhat[t] <= 0:
            raise FeasibilityError(f"net output nonpositive at t={t}")
        C[t] = (1.0 - s_full[t]) * Yhat[t]
        sigma = paths.sigma[t] if main else 0.0
        eland = paths.E_land[t] if main else 0.0
        E[t] = sigma * (1.0 - mu_full[t]) * Y[t] + eland
        K[t + 1] = (1.0 - params.delta) * K[t] + s_full[t] * Yhat[t]
        M[t + 1] = params.Phi_M @ M[t] + np.array([E[t], 0.0, 0.0])
        F = params.eta * np.log2(M[t, 0] / params.M_AT_star) + paths.F_ex[t]
        T[t + 1] = params.Phi_T @ T[t] + np.array([params.xi1 * F, 0.0])
        if log_mode:
            W += params.beta**t * paths.L[t] * np.log(C[t] / paths.L[t])
        else:
            W += params.beta**t * paths.L[t] * (C[t] / paths.L[t]) ** p_ut / p_ut

    out = {
        "K": K, "M": M, "T": T, "Y": Y, "omega": omega, "Yhat": Yhat,
        "C": C, "E": E, "welfare": float(W),
        "s_full": s_full, "mu_full": mu_full,
    }
    if not need_gradient:
        return out

    lam_K = np.zeros(n_tot + 1)
    lam_M = np.zeros((n_tot + 1, 3))
    lam_T = np.zeros((n_tot + 1, 2))
    g_s = np.zeros(n)
    g_mu = np.zeros(n)
    ln2 = np.log(2.0)
    for t in range(n_tot - 1, -1, -1):
        main = t < n
        if log_mode:
            uc = params.beta**t * paths.L[t] / C[t]
        else:
            uc = params.beta**t * (C[t] / paths.L[t]) ** (-1.0 / params.psi)
        st = s_full[t]
        dYdK = a * Y[t] / K[t]
        sigma = paths.sigma[t] if main else 0.0
        theta1 = paths.theta1[t] if main else 0.0
        # value of one extra unit of net output at t
        w_yhat = uc * (1.0 - st) + lam_K[t + 1] * st
        lam_K[t] = (
            w_yhat * phi[t] * dYdK
            + lam_K[t + 1] * (1.0 - params.delta)
            + lam_M[t + 1, 0] * sigma * (1.0 - mu_full[t]) * dYdK
        )
        lam_M[t] = params.Phi_M.T @ lam_M[t + 1]
        lam_M[t, 0] += lam_T[t + 1, 0] * params.xi1 * params.eta / (ln2 * M[t, 0])
        dden = params.pi1 + 2.0 * params.pi2 * T[t, 0]
        if params.weitzman:
            dden += params.pi_hi * params.exp_hi * abs(T[t, 0]) ** (params.exp_hi - 1.0) * np.sign(T[t, 0])
        denom = (1.0 - dmg[t]) / omega[t] if omega[t] != 0 else 1.0
        domega = -omega[t] * dden / denom
        lam_T[t] = params.Phi_T.T @ lam_T[t + 1]
        lam_T[t, 0] += w_yhat * Y[t] * domega
        if main:
            g_s[t] = (lam_K[t + 1] - uc) * Yhat[t]
            dYhat_dmu = -theta1 * th2 * mu_full[t] ** (th2 - 1.0) * Y[t]
            g_mu[t] = w_yhat * dYhat_dmu - lam_M[t + 1, 0] * sigma * Y[t]

    out["grad_s"] = g_s
    out["grad_mu"] = g_mu
    out["lam_K"] = lam_K
    out["lam_MAT"] = lam_M[:, 0]
    return out


def objective_gradient(
    params, paths, horizon, init_state, decision_vector, tip_damage=None, zeta_path=None
):
    """Welfare and its gradient for a stacked (s_path, mu_path) vector."""
    n = horizon.n_periods
    z = np.asarray(decision_vector, dtype=float)
    res = rollout_adjoint(
        params, paths, horizon, init_state, z[:n], z[n:],
        tip_damage=tip_damage, zeta_path=zeta_path,
    )
    return res["welfare"], np.concatenate([res["grad_s"], res["grad_mu"]])


def _make_trajectory(params, paths, horizon, init_state, s_path, mu_path, res, iters):
    n = horizon.n_periods
    states = [init_state]
    decisions = []
    st = init_state
    for t in range(n):
        d = Decision(C=float(res["C"][t]), mu=float(mu_path[t]), mu_max=params.mu_max)
        decisions.append(d)
        st = StateVector(
            K=float(res["K"][t + 1]), M=res["M"][t + 1], T=res["T"][t + 1],
            zeta=st.zeta, chi=st.chi, J_index=st.J_index,
        )
        states.append(st)
    with np.errstate(divide="ignore", invalid="ignore"):
        scc = -res["lam_MAT"][1 : n + 1] / res["lam_K"][1 : n + 1] * params.scc_unit_factor
    tax = np.array(
        [
            carbon_tax(mu_path[t], paths.theta1[t], params.theta2, paths.sigma[t])
            * params.scc_unit_factor
            if paths.sigma[t] > 0
            else np.nan
            for t in range(n)
        ]
    )
    return Trajectory(
        states=states,
        decisions=decisions,
        s_path=np.asarray(s_path, dtype=float),
        mu_path=np.asarray(mu_path, dtype=float),
        welfare=res["welfare"],
        scc_path=scc,
        tax_path=tax,
        iterations=iters,
    )


def solve_deterministic(
    params: ModelParams,
    paths: ExogenousPaths,
    horizon: Horizon,
    init_state: StateVector,
    guess=None,
    tol: float = 1e-6,
    max_iter: int = 5000,
    tip_damage=None,
    zeta_path=None,
    callback=None,
) -> Trajectory:
    """Maximize discounted welfare over savings and emission control paths.

    Convergence is a projected-gradient norm of at most ``tol`` on the
    objective rescaled to order one.  Raises SolverError with the best
    iterate attached on non-convergence.
    """
    _check_lengths(paths, horizon)
    n = horizon.n_periods
    if isinstance(guess, Trajectory):
        z0 = np.concatenate([guess.s_path, guess.mu_path])
    elif guess is not None:
        z0 = np.asarray(guess, dtype=float)
        if z0.shape != (2 * n,):
            raise DomainError(f"guess must stack (s, mu) of length {2 * n}")
    else:
        z0 = np.concatenate([np.full(n, 0.24), np.linspace(0.1, 0.9, n)])
    lower = np.concatenate([np.full(n, S_MIN), np.zeros(n)])
    upper = np.concatenate([np.full(n, S_MAX), np.full(n, params.mu_max)])
    z0 = np.clip(z0, lower, upper)

    w0, _ = objective_gradient(params, paths, horizon, init_state, z0, tip_damage, zeta_path)
    scale = max(abs(w0), 1.0)

    def fg(z):
        w, g = objective_gradient(params, paths, horizon, init_state, z, tip_damage, zeta_path)
        return -w / scale, -g / scale

    z, f, iters = minimize_box(fg, z0, lower, upper, tol=tol, max_iter=max_iter, callback=callback)
    res = rollout_adjoint(params, paths, horizon, init_state, z[:n], z[n:], tip_damage, zeta_path)
    return _make_trajectory(params, paths, horizon, init_state, z[:n], z[n:], res, iters)


def _coarsen(params: ModelParams, paths: ExogenousPaths, horizon: Horizon, factor: int):
    cf = int(factor)
    n_c = max(2, horizon.n_periods // cf)
    Phi_M_c = np.linalg.matrix_power(params.Phi_M, cf)
    Phi_T_c = np.linalg.matrix_power(params.Phi_T, cf)
    # forcing accumulates through I + Phi_T + ... + Phi_T^(cf-1)
    acc = sum(np.linalg.matrix_power(params.Phi_T, k) for k in range(cf))
    xi1_c = params.xi1 * acc[0, 0]
    params_c = params.with_overrides(
        beta=params.beta**cf,
        delta=1.0 - (1.0 - params.delta) ** cf,
        Phi_M=Phi_M_c,
        Phi_T=Phi_T_c,
        xi1=xi1_c,
        step_years=params.step_years * cf,
    )
    idx = np.arange(0, len(paths) - (cf - 1), cf)
    paths_c = ExogenousPaths(
        A=paths.A[idx] * cf,
        L=paths.L[idx],
        sigma=paths.sigma[idx],
        theta1=paths.theta1[idx],
        E_land=paths.E_land[idx] * cf,
        F_ex=paths.F_ex[idx],
    )
    horizon_c = Horizon(
        n_periods=n_c,
        step_years=horizon.step_years * cf,
        terminal_rule=horizon.terminal_rule,
        continuation_periods=max(2, horizon.continuation_periods // cf),
        terminal_consumption_share=horizon.terminal_consumption_share,
    )
    return params_c, paths_c, horizon_c


def refine_from_coarse(
    params: ModelParams,
    paths: ExogenousPaths,
    horizon_fine: Horizon,
    init_state: StateVector,
    coarse_factor: int = 2,
    tol: float = 1e-5,
) -> Trajectory:
    """Coarse-time-grid solve interpolated onto the fine grid as a guess.

    With coarse_factor 1 this is just a direct solve.  The returned
    trajectory is a feasible warm start (decisions clipped to bounds),
    not a converged fine solution.
    """
    if coarse_factor < 1 or int(coarse_factor) != coarse_factor:
        raise DomainError("coarse_factor must be a positive integer")
    if coarse_factor == 1:
        return solve_deterministic(params, paths, horizon_fine, init_state, tol=tol)
    params_c, paths_c, horizon_c = _coarsen(params, paths, horizon_fine, coarse_factor)
    coarse = solve_deterministic(params_c, paths_c, horizon_c, init_state, tol=tol)
    n = horizon_fine.n_periods
    t_f = np.arange(n)
    t_c = np.arange(horizon_c.n_periods) * coarse_factor
    s_fine = np.interp(t_f, t_c, coarse.s_path)
    mu_fine = np.interp(t_f, t_c, coarse.mu_path)
    s_fine = np.clip(s_fine, S_MIN, S_MAX)
    mu_fine = np.clip(mu_fine, 0.0, params.mu_max)
    res = rollout_adjoint(params, paths, horizon_fine, init_state, s_fine, mu_fine)
    return _make_trajectory(params, paths, horizon_fine, init_state, s_fine, mu_fine, res, 0)


def scc_deterministic(
    params: ModelParams,
    paths: ExogenousPaths,
    horizon: Horizon,
    solution: Trajectory,
    init_state: StateVector | None = None,
    timing: str = "emission",
):
    """Per-period SCC from the adjoint multipliers of a converged solve.

    With ``timing="emission"`` (default) SCC_t prices the carbon injected
    by period-t emissions, which enters the atmosphere at t+1; this is
    the quantity that equals the abatement-implied carbon tax at an
    interior optimum.  With ``timing="stock"`` SCC_t prices a marginal
    unit of atmospheric carbon already present at t, the ratio of the
    time-t value-function partials, which shifts the default by one
    period.  Both are converted to dollars per tC with the calibration's
    unit factor.
    """
    if timing not in ("emission", "stock"):
        raise ValueError(f"unknown SCC timing {timing!r}")
    init_state = init_state if init_state is not None else solution.states[0]
    res = rollout_adjoint(
        params, paths, horizon, init_state, solution.s_path, solution.mu_path
    )
    n = horizon.n_periods
    lo = 1 if timing == "emission" else 0
    lam_K = res["lam_K"][lo : lo + n]
    if np.any(np.abs(lam_K) < 1e-300):
        raise SolverError("degenerate capital multiplier in SCC computation")
    return -res["lam_MAT"][lo : lo + n] / lam_K * params.scc_unit_factor
