"""Forward simulation of solved policies and rolling certainty-equivalent solves.

Each sample path gets its own counter-based random stream keyed by
(seed, path index), so results are bit-reproducible regardless of how
paths are batched or parallelized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DomainError, ModelParams, ExogenousPaths, StateVector
from .det_solver import Horizon, solve_deterministic
from .stochastic import ConfigurationError
from .vfi import DiscreteStates, PolicyTable, ValueFunction, scc_stochastic

__all__ = [
    "PathEnsemble",
    "path_rng",
    "simulate_policy",
    "sceq_path",
    "quantile_table",
    "QUANTILES",
]

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def path_rng(seed: int, path: int) -> np.random.Generator:
    """Independent stream for one sample path (counter-based, order free)."""
    return np.random.Generator(np.random.Philox(key=[int(seed), int(path)]))


@dataclass
class PathEnsemble:
    """Simulated paths: states, decisions, prices, and domain diagnostics."""

    states: np.ndarray      # (n_paths, n+1, 6)
    disc_index: np.ndarray  # (n_paths, n+1) combined discrete state
    s: np.ndarray           # (n_paths, n)
    mu: np.ndarray
    C: np.ndarray
    E: np.ndarray
    scc: np.ndarray
    tax: np.ndarray
    seed: int
    clamp_count: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def n_periods(self) -> int:
        return self.s.shape[1]

    def quantiles(self, name: str, qs=QUANTILES) -> np.ndarray:
        """Per-period quantiles of a recorded field, shape (len(qs), n)."""
        arr = getattr(self, name)
        return np.quantile(arr, qs, axis=0)


def quantile_table(arr: np.ndarray, qs=QUANTILES) -> np.ndarray:
    """Column-wise quantiles of an (n_paths, n_periods) array."""
    return np.quantile(np.asarray(arr, dtype=float), qs, axis=0)


def _sample_index(probs: np.ndarray, u: float) -> int:
    return int(np.searchsorted(np.cumsum(probs), u, side="right").clip(0, len(probs) - 1))


def simulate_policy(
    params: ModelParams,
    paths: ExogenousPaths,
    vf: ValueFunction,
    pol: PolicyTable,
    init_state: StateVector,
    n_paths: int,
    seed: int,
    init_disc: int = 0,
    record_scc: bool = True,
) -> PathEnsemble:
    """Roll the fitted policy forward under sampled chain transitions.

    States leaving the period's approximation domain are clamped for
    policy evaluation and counted in ``clamp_count``.
    """
    disc = vf.disc
    n = len(pol.s_approx)
    n_tip = disc.n_tip
    X = np.empty((n_paths, n + 1, 6))
    D = np.empty((n_paths, n + 1), dtype=int)
    S = np.empty((n_paths, n))
    MU = np.empty((n_paths, n))
    C = np.empty((n_paths, n))
    E = np.empty((n_paths, n))
    SCC = np.full((n_paths, n), np.nan)
    TAX = np.empty((n_paths, n))
    X[:, 0] = init_state.continuous()
    D[:, 0] = init_disc
    U = np.empty((n_paths, n, 2))
    for p in range(n_paths):
        U[p] = path_rng(seed, p).random((n, 2))

    clamps = 0
    a = params.alpha
    for t in range(n):
        x = X[:, t]
        d_now = D[:, t]
        outside = ~vf.domains[t].contains(x)
        clamps += int(np.count_nonzero(outside))
        xc = vf.domains[t].clamp(x)
        for d in np.unique(d_now):
            rows = np.flatnonzero(d_now == d)
            s_d, mu_d = pol.decide(t, xc[rows], d)
            S[rows, t] = s_d
            MU[rows, t] = mu_d
            if record_scc:
                SCC[rows, t] = np.atleast_1d(
                    scc_stochastic(vf, t, xc[rows], d, params.scc_unit_factor)
                )
        zeta = np.array([disc.zeta_of(d) for d in d_now])
        dmg = np.array([disc.damage_of(d) for d in d_now])
        K, M_AT, T_AT = x[:, 0], x[:, 1], x[:, 4]
        Y = paths.A[t] * zeta * K**a * paths.L[t] ** (1.0 - a)
        den = 1.0 + params.pi1 * T_AT + params.pi2 * T_AT**2
        if params.weitzman:
            den = den + params.pi_hi * np.abs(T_AT) ** params.exp_hi
        phi = (1.0 - dmg) / den - paths.theta1[t] * MU[:, t] ** params.theta2
        Yhat = phi * Y
        C[:, t] = (1.0 - S[:, t]) * Yhat
        E[:, t] = paths.sigma[t] * (1.0 - MU[:, t]) * Y + paths.E_land[t]
        TAX[:, t] = (
            paths.theta1[t] * params.theta2 * MU[:, t] ** (params.theta2 - 1.0)
            / paths.sigma[t] * params.scc_unit_factor
        )
        X[:, t + 1, 0] = (1.0 - params.delta) * K + S[:, t] * Yhat
        X[:, t + 1, 1:4] = x[:, 1:4] @ params.Phi_M.T
        X[:, t + 1, 1] += E[:, t]
        F = params.eta * np.log2(M_AT / params.M_AT_star) + paths.F_ex[t]
        X[:, t + 1, 4:6] = x[:, 4:6] @ params.Phi_T.T
        X[:, t + 1, 4] += params.xi1 * F
        # chain transitions: one uniform each for the productivity and
        # tipping moves
        for p in range(n_paths):
            i, j = disc.split(int(d_now[p]))
            if disc.lrr is not None:
                i = _sample_index(disc.lrr.P[i], U[p, t, 0])
            if disc.tip is not None:
                idx, probs = disc.tip.successors(j, float(T_AT[p]))
                j = int(idx[_sample_index(probs, U[p, t, 1])])
            D[p, t + 1] = i * n_tip + j
    return PathEnsemble(
        states=X, disc_index=D, s=S, mu=MU, C=C, E=E, scc=SCC, tax=TAX,
        seed=seed, clamp_count=clamps,
    )


def _ce_paths(params, horizon_total, disc, d_now, T_AT):
    """Certainty-equivalent shock paths given the current discrete state.

    The productivity shock follows its conditional mean in logs; the
    tipping damage path is the expected damage under the chain with the
    hazard frozen at the current temperature.
    """
    i, j = disc.split(d_now)
    k = np.arange(horizon_total)
    if disc.lrr is not None:
        zeta0 = float(disc.lrr.nodes[i, 0])
        chi0 = float(disc.lrr.nodes[i, 1])
        # log zeta_{t+k} = log zeta_t + chi_t * (1 + r + ... + r^(k-1))
        rho = disc.lrr.drift_persistence
        cum = np.where(
            np.abs(1.0 - rho) < 1e-14, k * 1.0, (1.0 - rho**k) / (1.0 - rho)
        )
        zeta_path = zeta0 * np.exp(chi0 * cum)
    else:
        zeta_path = np.ones(horizon_total)
    if disc.tip is not None:
        P = disc.tip.P(float(T_AT))
        dist = np.zeros(disc.tip.n_states)
        dist[j] = 1.0
        dmg_path = np.empty(horizon_total)
        for kk in range(horizon_total):
            dmg_path[kk] = float(dist @ disc.tip.levels)
            dist = dist @ P
    else:
        dmg_path = np.zeros(horizon_total)
    return zeta_path, dmg_path


def sceq_path(
    params: ModelParams,
    paths: ExogenousPaths,
    horizon: Horizon,
    init_state: StateVector,
    disc: DiscreteStates | None = None,
    seed: int = 0,
    path_index: int = 0,
    init_disc: int = 0,
    tol: float = 1e-6,
):
    """One rolling certainty-equivalent path.

    At each period the remaining problem is re-solved deterministically
    along certainty-equivalent shock paths, the first decision is
    applied, and the realized shocks advance the state.  Valid only for
    time-separable preferences: the certainty-equivalent collapse throws
    away the risk adjustment that a recursive aggregator would apply.
    """
    if abs(params.gamma - 1.0 / params.psi) > 1e-12:
        raise ConfigurationError(
            "rolling certainty-equivalent solves require gamma = 1/psi"
        )
    disc = disc if disc is not None else DiscreteStates()
    n = horizon.n_periods
    rng = path_rng(seed, path_index)
    U = rng.random((n, 2))

    x = init_state.continuous()
    d_now = init_disc
    n_tip = disc.n_tip
    rec = {k: np.empty(n) for k in ("s", "mu", "C", "E", "scc", "tax")}
    X = np.empty((n + 1, 6))
    D = np.empty(n + 1, dtype=int)
    X[0], D[0] = x, d_now
    guess = None
    a = params.alpha
    for t in range(n):
        sub = Horizon(
            n_periods=n - t,
            step_years=horizon.step_years,
            terminal_rule=horizon.terminal_rule,
            continuation_periods=horizon.continuation_periods,
            terminal_consumption_share=horizon.terminal_consumption_share,
        )
        sub_paths = paths.shift(t)
        zeta_ce, dmg_ce = _ce_paths(params, sub.total_periods, disc, d_now, x[4])
        st = StateVector(K=x[0], M=x[1:4].copy(), T=x[4:6].copy())
        traj = solve_deterministic(
            params, sub_paths, sub, st,
            guess=guess, tol=tol, tip_damage=dmg_ce, zeta_path=zeta_ce,
        )
        s_t, mu_t = float(traj.s_path[0]), float(traj.mu_path[0])
        if n - t - 1 >= 2:
            guess = np.concatenate([traj.s_path[1:], traj.mu_path[1:]])
        else:
            guess = None
        rec["s"][t], rec["mu"][t] = s_t, mu_t
        rec["scc"][t] = traj.scc_path[0]
        rec["tax"][t] = traj.tax_path[0]

        zeta = disc.zeta_of(d_now)
        dmg = disc.damage_of(d_now)
        K, M_AT, T_AT = x[0], x[1], x[4]
        Y = paths.A[t] * zeta * K**a * paths.L[t] ** (1.0 - a)
        den = 1.0 + params.pi1 * T_AT + params.pi2 * T_AT**2
        if params.weitzman:
            den = den + params.pi_hi * abs(T_AT) ** params.exp_hi
        phi = (1.0 - dmg) / den - paths.theta1[t] * mu_t**params.theta2
        Yhat = phi * Y
        rec["C"][t] = (1.0 - s_t) * Yhat
        rec["E"][t] = paths.sigma[t] * (1.0 - mu_t) * Y + paths.E_land[t]
        xn = np.empty(6)
        xn[0] = (1.0 - params.delta) * K + s_t * Yhat
        xn[1:4] = params.Phi_M @ x[1:4]
        xn[1] += rec["E"][t]
        F = params.eta * np.log2(M_AT / params.M_AT_star) + paths.F_ex[t]
        xn[4:6] = params.Phi_T @ x[4:6]
        xn[4] += params.xi1 * F
        i, j = disc.split(d_now)
        if disc.lrr is not None:
            i = _sample_index(disc.lrr.P[i], U[t, 0])
        if disc.tip is not None:
            idx, probs = disc.tip.successors(j, float(T_AT))
            j = int(idx[_sample_index(probs, U[t, 1])])
        d_now = i * n_tip + j
        x = xn
        X[t + 1], D[t + 1] = x, d_now
    rec["states"] = X
    rec["disc_index"] = D
    return rec
