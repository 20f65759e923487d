"""Backward value-function iteration on Chebyshev grids.

Solves the finite-horizon stochastic planning problem by sweeping the
Bellman recursion backward in time.  The six continuous states live on
time-varying boxes; the productivity and tipping chains enter as a
discrete state index, one value-function surface per discrete state.
All nodes of a surface are maximized simultaneously with the batched
projected-gradient ascent in :mod:`iamkit.optimize`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .approx import (
    ChebApprox,
    Domain,
    basis_matrix,
    build_time_varying_domains,
    cheb_nodes,
    fit_tensor,
)
from .core import DomainError, ModelParams, ExogenousPaths, StateVector
from .det_solver import S_MIN, S_MAX, Horizon
from .optimize import maximize_batch
from .stochastic import EZParams, LrrChain, TippingChain, tipping_probability

__all__ = [
    "DiscreteStates",
    "ValueFunction",
    "PolicyTable",
    "terminal_value",
    "bellman_step",
    "solve_vfi",
    "scc_stochastic",
    "default_domains",
]

_CHUNK = 16384  # nodes per basis-matrix block, bounds peak memory


@dataclass(frozen=True)
class DiscreteStates:
    """Joint index over the productivity and tipping chains.

    The combined index is d = i_lrr * n_tip + j_tip.  Either chain may
    be absent (None), in which case it contributes a single degenerate
    state.
    """

    lrr: LrrChain | None = None
    tip: TippingChain | None = None

    @property
    def n_lrr(self) -> int:
        return self.lrr.n_states if self.lrr is not None else 1

    @property
    def n_tip(self) -> int:
        return self.tip.n_states if self.tip is not None else 1

    @property
    def n_states(self) -> int:
        return self.n_lrr * self.n_tip

    def split(self, d: int):
        return divmod(d, self.n_tip)

    def zeta_of(self, d: int) -> float:
        i, _ = self.split(d)
        return float(self.lrr.nodes[i, 0]) if self.lrr is not None else 1.0

    def damage_of(self, d: int) -> float:
        _, j = self.split(d)
        return float(self.tip.levels[j]) if self.tip is not None else 0.0

    def successor_table(self, d: int):
        """Successor discrete indices and the pieces of their probabilities.

        Returns (succ_ids, p_lrr, tip_succ, tip_probs_fn) where
        ``succ_ids`` has shape (n_lrr_succ * n_tip_succ,), ``p_lrr`` the
        matching productivity-chain probabilities, and
        ``tip_probs_fn(T_AT) -> (N, n_tip_succ)`` the (possibly
        temperature-dependent) tipping probabilities.
        """
        i, j = self.split(d)
        if self.lrr is not None:
            lrr_succ = np.flatnonzero(self.lrr.P[i] > 0.0)
            p_lrr = self.lrr.P[i, lrr_succ]
        else:
            lrr_succ, p_lrr = np.array([0]), np.array([1.0])
        if self.tip is not None:
            tip = self.tip
            if tip.stage_of[j] == 0:
                tip_succ = np.concatenate(
                    ([0], [tip.entry_state(l) for l in range(len(tip.terminal_levels))])
                )

                def tip_probs(T_AT):
                    p = np.atleast_1d(tipping_probability(T_AT, tip))
                    return np.concatenate(
                        [(1.0 - p)[:, None], p[:, None] * tip.level_dist[None, :]], axis=1
                    )

            else:
                idx, probs = tip.successors(j, 0.0)
                tip_succ = idx

                def tip_probs(T_AT, probs=probs):
                    return np.broadcast_to(probs, (len(np.atleast_1d(T_AT)), len(probs)))

        else:
            tip_succ = np.array([0])

            def tip_probs(T_AT):
                return np.ones((len(np.atleast_1d(T_AT)), 1))

        succ_ids = (lrr_succ[:, None] * self.n_tip + tip_succ[None, :]).ravel()
        return succ_ids, p_lrr, tip_succ, tip_probs


@dataclass
class ValueFunction:
    """Per-period, per-discrete-state Chebyshev value surfaces (u units)."""

    domains: list
    degree: int
    coeffs: list  # coeffs[t] has shape (n_disc, n_terms)
    disc: DiscreteStates
    ez: EZParams
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_periods(self) -> int:
        return len(self.coeffs) - 1

    def value(self, t: int, x, d: int):
        Phi = basis_matrix(self.domains[t], self.degree, np.atleast_2d(x))
        out = Phi @ self.coeffs[t][d]
        return float(out[0]) if out.size == 1 else out

    def value_gradient(self, t: int, x, d: int, dims=(0, 1)):
        """Value and its partials along ``dims`` at point(s) x."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        Phi, dPhi = basis_matrix(
            self.domains[t], self.degree, x, derivatives=True, deriv_dims=dims
        )
        c = self.coeffs[t][d]
        return Phi @ c, np.stack([dP @ c for dP in dPhi], axis=-1)


@dataclass
class PolicyTable:
    """Fitted savings-rate and abatement policies, one surface per (t, d)."""

    s_approx: list  # s_approx[t][d] -> ChebApprox
    mu_approx: list
    mu_max: float

    def decide(self, t: int, x, d: int):
        """Clamped (s, mu) decision at point(s) x."""
        dom = self.s_approx[t][d].domain
        xc = dom.clamp(np.atleast_2d(x))
        s = np.clip(self.s_approx[t][d].eval(xc), S_MIN, S_MAX)
        mu = np.clip(self.mu_approx[t][d].eval(xc), 0.0, self.mu_max)
        return s, mu


def _ez_cont_and_weights(V, probs, ez: EZParams):
    """Continuation value (beta/Xi)*CE plus d cont / d V_k, both stable.

    V has shape (N, n_succ); probs broadcasts to it.  For gamma = 1/psi
    the recursion is time separable and the expectation is linear.
    """
    if abs(ez.gamma - 1.0 / ez.psi) < 1e-12:
        w = ez.beta * np.broadcast_to(probs, V.shape)
        return np.sum(w * V, axis=-1), w
    theta = ez.Theta
    xv = ez.Xi * V
    top = np.max(xv, axis=-1, keepdims=True)
    # guard against interpolation overshooting across the sign boundary
    r = np.maximum(xv / top, 1e-12)
    S = np.sum(probs * r**theta, axis=-1, keepdims=True)
    ce = (top * S ** (1.0 / theta))[..., 0]
    w = ez.beta * probs * r ** (theta - 1.0) * S ** (1.0 / theta - 1.0)
    return ez.beta / ez.Xi * ce, w


def _node_objective(
    X, Z, t, params, paths, zeta, dmg, dom_next, degree, succ_data, d_of, ez,
):
    """Bellman objective and its (s, mu) gradient at a block of problems.

    X (N, 6) are the continuous states, Z (N, 2) the decisions; ``zeta``
    and ``dmg`` are per-row shock values.  ``succ_data[d]`` holds the
    successor data (Cs, p_lrr, n_tip_succ, tip_probs) of discrete state
    d and ``d_of`` maps rows to discrete states, so one basis evaluation
    serves every discrete state in the block.  Returns (obj, grad).
    """
    s, mu = Z[:, 0], Z[:, 1]
    K, M_AT = X[:, 0], X[:, 1]
    T_AT = X[:, 4]
    L = paths.L[t]
    a = params.alpha
    Y = paths.A[t] * zeta * K**a * L ** (1.0 - a)
    denom = 1.0 + params.pi1 * T_AT + params.pi2 * T_AT**2
    if params.weitzman:
        denom = denom + params.pi_hi * np.abs(T_AT) ** params.exp_hi
    omega = (1.0 - dmg) / denom
    phi = omega - paths.theta1[t] * mu**params.theta2
    feas = phi > 1e-8
    phi = np.maximum(phi, 1e-8)
    Yhat = phi * Y
    C = (1.0 - s) * Yhat
    log_mode = params.log_utility or abs(params.psi - 1.0) < 1e-12
    if log_mode:
        u = L * np.log(C / L)
        uc = L / C
    else:
        p = 1.0 - 1.0 / params.psi
        u = L * (C / L) ** p / p
        uc = (C / L) ** (-1.0 / params.psi)

    E = paths.sigma[t] * (1.0 - mu) * Y + paths.E_land[t]
    Xn = np.empty_like(X)
    Xn[:, 0] = (1.0 - params.delta) * K + s * Yhat
    Xn[:, 1:4] = X[:, 1:4] @ params.Phi_M.T
    Xn[:, 1] += E
    F = params.eta * np.log2(M_AT / params.M_AT_star) + paths.F_ex[t]
    Xn[:, 4:6] = X[:, 4:6] @ params.Phi_T.T
    Xn[:, 4] += params.xi1 * F
    # successors beyond the next-period box are valued by linear extension
    # from the nearest boundary point; a hard clamp would hand the policy
    # free state adjustments and zero out the gradient
    Xc = dom_next.clamp(Xn)
    delta = Xn - Xc

    obj = np.empty(len(X))
    dcont_dK = np.empty(len(X))
    dcont_dM = np.empty(len(X))
    for lo in range(0, len(X), _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, len(X)))
        dsl = delta[sl]
        ext_dims = [e for e in range(X.shape[1]) if e > 1 and np.any(dsl[:, e] != 0.0)]
        dims = (0, 1, *ext_dims)
        Phi, dPhis = basis_matrix(
            dom_next, degree, Xc[sl], derivatives=True, deriv_dims=dims
        )
        db = d_of[sl]
        for d in np.unique(db):
            r = np.flatnonzero(db == d)
            Cs, p_lrr, n_tip_succ, tip_probs = succ_data[d]
            probs = np.repeat(p_lrr, n_tip_succ)[None, :] * np.tile(
                tip_probs(T_AT[sl][r]), (1, len(p_lrr))
            )
            V = Phi[r] @ Cs
            gK = dPhis[0][r] @ Cs
            gM = dPhis[1][r] @ Cs
            V = V + dsl[r, 0, None] * gK + dsl[r, 1, None] * gM
            for e, dP in zip(ext_dims, dPhis[2:]):
                V = V + dsl[r, e, None] * (dP[r] @ Cs)
            cont, w = _ez_cont_and_weights(V, probs, ez)
            rows = np.arange(lo, min(lo + _CHUNK, len(X)))[r]
            obj[rows] = u[rows] + cont
            dcont_dK[rows] = np.sum(w * gK, axis=-1)
            dcont_dM[rows] = np.sum(w * gM, axis=-1)

    dYhat_dmu = -paths.theta1[t] * params.theta2 * mu ** (params.theta2 - 1.0) * Y
    dYhat_dmu *= feas
    g = np.empty_like(Z)
    g[:, 0] = (dcont_dK - uc) * Yhat
    g[:, 1] = (uc * (1.0 - s) + dcont_dK * s) * dYhat_dmu - dcont_dM * paths.sigma[t] * Y
    return obj, g


def terminal_value(
    params: ModelParams,
    paths: ExogenousPaths,
    t_start: int,
    domain: Domain,
    degree: int,
    disc: DiscreteStates,
    n_continuation: int = 80,
    consumption_share: float = 0.78,
    points_per_dim: int | None = None,
):
    """Fit the terminal value surfaces from a fixed-share, zero-emission rollout.

    From each node the economy runs ``n_continuation`` more periods
    consuming the fixed share of net output with abatement retired; the
    discrete state is frozen.  Under certainty the recursive aggregator
    collapses to the discounted utility sum, so the result is preference
    independent beyond beta and psi.
    """
    m = points_per_dim if points_per_dim is not None else degree + 1
    X0 = cheb_nodes(domain, m)
    out = np.empty((disc.n_states, len(X0)))
    log_mode = params.log_utility or abs(params.psi - 1.0) < 1e-12
    p = 1.0 - 1.0 / params.psi
    last = len(paths) - 1
    for d in range(disc.n_states):
        zeta, dmg = disc.zeta_of(d), disc.damage_of(d)
        K = X0[:, 0].copy()
        M = X0[:, 1:4].copy()
        T = X0[:, 4:6].copy()
        W = np.zeros(len(X0))
        for k in range(n_continuation):
            t = min(t_start + k, last)
            L = paths.L[t]
            Y = paths.A[t] * zeta * K ** params.alpha * L ** (1.0 - params.alpha)
            denom = 1.0 + params.pi1 * T[:, 0] + params.pi2 * T[:, 0] ** 2
            if params.weitzman:
                denom = denom + params.pi_hi * np.abs(T[:, 0]) ** params.exp_hi
            Yhat = (1.0 - dmg) / denom * Y
            C = consumption_share * Yhat
            if log_mode:
                W += params.beta**k * L * np.log(C / L)
            else:
                W += params.beta**k * L * (C / L) ** p / p
            K = (1.0 - params.delta) * K + Yhat - C
            F = params.eta * np.log2(M[:, 0] / params.M_AT_star) + paths.F_ex[t]
            M = M @ params.Phi_M.T
            T_new = T @ params.Phi_T.T
            T_new[:, 0] += params.xi1 * F
            T = T_new
        out[d] = W
    approxes = [fit_tensor(domain, degree, out[d], points_per_dim=m) for d in range(disc.n_states)]
    return np.stack([ap.coeffs for ap in approxes]), out


def bellman_step(
    t: int,
    params: ModelParams,
    paths: ExogenousPaths,
    dom_t: Domain,
    dom_next: Domain,
    degree: int,
    coeffs_next: np.ndarray,
    disc: DiscreteStates,
    ez: EZParams,
    points_per_dim: int | None = None,
    multistart: int = 3,
    tol: float = 1e-5,
    warm: tuple | None = None,
):
    """One backward Bellman sweep; returns (coeffs_t, s_nodes, mu_nodes, diag).

    ``warm`` optionally provides (s, mu) node arrays of shape
    (n_disc, n_nodes) used as an extra multistart candidate.
    """
    m = points_per_dim if points_per_dim is not None else degree + 1
    X = cheb_nodes(dom_t, m)
    N = len(X)
    n_disc = disc.n_states
    coeffs_t = np.empty_like(coeffs_next)
    lower = np.array([S_MIN, 0.0])
    upper = np.array([S_MAX, params.mu_max])
    log_mode = params.log_utility or abs(params.psi - 1.0) < 1e-12

    # fuse every discrete state into one batch so all problems share the
    # basis evaluations of each ascent iteration
    succ_data = []
    for d in range(n_disc):
        succ_ids, p_lrr, tip_succ, tip_probs = disc.successor_table(d)
        Cs = np.ascontiguousarray(coeffs_next[succ_ids].T)  # (n_terms, n_succ)
        succ_data.append((Cs, p_lrr, len(tip_succ), tip_probs))
    XX = np.tile(X, (n_disc, 1))
    d_of = np.repeat(np.arange(n_disc), N)
    zeta_r = np.array([disc.zeta_of(d) for d in range(n_disc)])[d_of]
    dmg_r = np.array([disc.damage_of(d) for d in range(n_disc)])[d_of]
    P = n_disc * N

    # per-problem objective scale so the optimizer sees gradients of
    # order one: uc * Yhat at a reference interior decision
    L = paths.L[t]
    Yref = paths.A[t] * zeta_r * XX[:, 0] ** params.alpha * L ** (1.0 - params.alpha)
    den = 1.0 + params.pi1 * XX[:, 4] + params.pi2 * XX[:, 4] ** 2
    if params.weitzman:
        den = den + params.pi_hi * np.abs(XX[:, 4]) ** params.exp_hi
    Yhat_ref = np.maximum((1.0 - dmg_r) / den, 1e-8) * Yref
    C_ref = 0.75 * Yhat_ref
    uc_ref = L / C_ref if log_mode else (C_ref / L) ** (-1.0 / params.psi)
    sc = uc_ref * Yhat_ref

    def fg(Z, idx):
        sel = slice(None) if idx is None else idx
        f, g = _node_objective(
            XX[sel], Z, t, params, paths, zeta_r[sel], dmg_r[sel],
            dom_next, degree, succ_data, d_of[sel], ez,
        )
        return f / sc[sel], g / sc[sel, None]

    n_default = max(multistart, 1) if warm is None else max(multistart, 0)
    starts = [np.column_stack([np.full(P, 0.25), np.full(P, mu0)])
              for mu0 in np.linspace(0.1, 0.9 * params.mu_max, n_default)]
    if warm is not None:
        starts.append(np.column_stack(
            [np.asarray(warm[0]).ravel(), np.asarray(warm[1]).ravel()]
        ))
    best_Z, best_f = None, None
    for Z0 in starts:
        Z, f, pg = maximize_batch(fg, Z0, lower, upper, tol=tol, max_iter=120)
        if best_Z is None:
            best_Z, best_f, best_pg = Z, f, pg
        else:
            better = f > best_f
            best_Z[better] = Z[better]
            best_pg = np.where(better, pg, best_pg)
            best_f = np.maximum(best_f, f)
    worst_pg = float(np.max(best_pg))
    vals = (best_f * sc).reshape(n_disc, N)
    for d in range(n_disc):
        coeffs_t[d] = fit_tensor(dom_t, degree, vals[d], points_per_dim=m).coeffs
    s_nodes = best_Z[:, 0].reshape(n_disc, N)
    mu_nodes = best_Z[:, 1].reshape(n_disc, N)
    return coeffs_t, s_nodes, mu_nodes, {"max_projected_gradient": worst_pg}


def default_domains(
    params: ModelParams,
    paths: ExogenousPaths,
    init_state: StateVector,
    n_periods: int,
    disc: DiscreteStates,
    init_halfwidth=(0.12, 0.04, 0.04, 0.04, 0.25, 0.12),
    s_band: float = 0.08,
    mu_band: float = 0.3,
    margin: float = 0.03,
    skeleton=None,
):
    """Forward-reachability boxes for the six continuous states.

    Unrestricted decision corners make worst-case reachable sets blow up
    over long horizons, so the sampler explores decisions only in a band
    around a deterministic optimal skeleton (solved here unless
    ``skeleton`` provides (s_path, mu_path)); shock extremes drive the
    genuine spread.  The period-0 box is a relative (stocks) or absolute
    (temperatures) neighborhood of the initial state.
    """
    from .det_solver import solve_deterministic

    x0 = init_state.continuous()
    hw = np.asarray(init_halfwidth, dtype=float)
    lo = np.empty(6)
    hi = np.empty(6)
    for i in range(4):  # K and carbon stocks: relative half-width
        lo[i] = x0[i] * (1.0 - hw[i])
        hi[i] = x0[i] * (1.0 + hw[i])
    for i in range(4, 6):  # temperatures: absolute half-width, degrees
        lo[i] = x0[i] - hw[i]
        hi[i] = x0[i] + hw[i]
    initial = Domain(lo, hi)

    if skeleton is None:
        det = solve_deterministic(
            params, paths, Horizon(n_periods=max(n_periods, 2)), init_state
        )
        s_skel, mu_skel = det.s_path, det.mu_path
    else:
        s_skel, mu_skel = (np.asarray(v, dtype=float) for v in skeleton)

    zetas = (
        np.array([disc.lrr.zeta_values.min(), disc.lrr.zeta_values.max()])
        if disc.lrr is not None else np.array([1.0])
    )
    dmgs = (
        np.array([0.0, float(disc.tip.levels.max())])
        if disc.tip is not None else np.array([0.0])
    )

    def sampler(t, dom):
        s_vals = np.clip(np.array([s_skel[t] - s_band, s_skel[t] + s_band]), S_MIN, S_MAX)
        mu_vals = np.clip(
            np.array([mu_skel[t] - mu_band, mu_skel[t] + mu_band]), 0.0, params.mu_max
        )
        corners = np.array(
            [[dom.lo[i] if (c >> i) & 1 == 0 else dom.hi[i] for i in range(6)]
             for c in range(64)]
        )
        # margin inflation can push stock bounds negative; production and
        # forcing need positive stocks
        corners[:, :4] = np.maximum(corners[:, :4], 1e-8)
        imgs = []
        for z in zetas:
            for g in dmgs:
                for s in s_vals:
                    for mu in mu_vals:
                        K, M_AT, T_AT = corners[:, 0], corners[:, 1], corners[:, 4]
                        Y = paths.A[t] * z * K**params.alpha * paths.L[t] ** (1.0 - params.alpha)
                        denom = 1.0 + params.pi1 * T_AT + params.pi2 * T_AT**2
                        if params.weitzman:
                            denom = denom + params.pi_hi * np.abs(T_AT) ** params.exp_hi
                        phi = np.maximum((1.0 - g) / denom - paths.theta1[t] * mu**params.theta2, 1e-8)
                        E = paths.sigma[t] * (1.0 - mu) * Y + paths.E_land[t]
                        Xn = np.empty_like(corners)
                        Xn[:, 0] = (1.0 - params.delta) * K + s * phi * Y
                        Xn[:, 1:4] = corners[:, 1:4] @ params.Phi_M.T
                        Xn[:, 1] += E
                        F = params.eta * np.log2(M_AT / params.M_AT_star) + paths.F_ex[t]
                        Xn[:, 4:6] = corners[:, 4:6] @ params.Phi_T.T
                        Xn[:, 4] += params.xi1 * F
                        imgs.append(Xn)
        return np.concatenate(imgs, axis=0)

    domains = build_time_varying_domains(initial, n_periods, sampler, margin=margin)
    # stocks must stay positive for production and forcing to be defined
    fixed = []
    for dom in domains:
        lo = dom.lo.copy()
        lo[:4] = np.maximum(lo[:4], 1e-8 * np.maximum(dom.hi[:4], 1.0))
        fixed.append(Domain(lo, dom.hi))
    return fixed


def solve_vfi(
    params: ModelParams,
    paths: ExogenousPaths,
    horizon: Horizon,
    init_state: StateVector,
    disc: DiscreteStates | None = None,
    degree: int = 4,
    points_per_dim: int | None = None,
    domains: list | None = None,
    multistart: int = 3,
    tol: float = 1e-5,
    warm_policy: tuple | None = None,
    checkpoint_dir: str | None = None,
    checkpoint_every: int = 10,
    verbose: bool = False,
):
    """Solve the stochastic program backward; returns (ValueFunction, PolicyTable).

    ``warm_policy`` optionally supplies starting points node by node:
    either (s_nodes, mu_nodes) lists from a previous solve on the same
    node layout, or a PolicyTable from any layout, evaluated at this
    solve's nodes.  With ``multistart=0`` the warm start is the only
    start.
    """
    disc = disc if disc is not None else DiscreteStates()
    n = horizon.n_periods
    if (params.log_utility or abs(params.psi - 1.0) < 1e-12) and abs(
        params.gamma - 1.0 / params.psi
    ) > 1e-12:
        raise DomainError("log utility requires gamma = 1/psi (time separable)")
    ez = EZParams(beta=params.beta, psi=params.psi, gamma=params.gamma)
    if domains is None:
        domains = default_domains(params, paths, init_state, n, disc)
    if len(domains) != n + 1:
        raise DomainError(f"need {n + 1} domains, got {len(domains)}")

    coeffs = [None] * (n + 1)
    coeffs[n], _ = terminal_value(
        params, paths, n, domains[n], degree, disc,
        n_continuation=horizon.continuation_periods if horizon.terminal_rule == "continuation" else 1,
        consumption_share=horizon.terminal_consumption_share,
        points_per_dim=points_per_dim,
    )
    if horizon.terminal_rule == "zero":
        coeffs[n] = np.zeros_like(coeffs[n])
        if params.psi < 1.0 and abs(params.gamma - 1.0 / params.psi) > 1e-12:
            raise DomainError(
                "zero terminal value is incompatible with the sign convention "
                "of the recursive aggregator when psi < 1"
            )

    s_tab, mu_tab = [None] * n, [None] * n
    diag = {"max_projected_gradient": 0.0}
    for t in range(n - 1, -1, -1):
        warm = None
        if isinstance(warm_policy, PolicyTable):
            m = points_per_dim if points_per_dim is not None else degree + 1
            Xw = cheb_nodes(domains[t], m)
            warm = (
                np.stack([warm_policy.decide(t, Xw, d)[0] for d in range(disc.n_states)]),
                np.stack([warm_policy.decide(t, Xw, d)[1] for d in range(disc.n_states)]),
            )
        elif warm_policy is not None:
            ws, wmu = warm_policy
            warm = (ws[t], wmu[t])
        coeffs[t], s_nodes, mu_nodes, d_t = bellman_step(
            t, params, paths, domains[t], domains[t + 1], degree, coeffs[t + 1],
            disc, ez, points_per_dim=points_per_dim, multistart=multistart,
            tol=tol, warm=warm,
        )
        s_tab[t], mu_tab[t] = s_nodes, mu_nodes
        diag["max_projected_gradient"] = max(
            diag["max_projected_gradient"], d_t["max_projected_gradient"]
        )
        if verbose:
            print(f"period {t}: node pg {d_t['max_projected_gradient']:.2e}")
        if checkpoint_dir and (t % checkpoint_every == 0 or t == n - 1):
            os.makedirs(checkpoint_dir, exist_ok=True)
            np.savez(
                os.path.join(checkpoint_dir, f"vfi_t{t:04d}.npz"),
                coeffs=coeffs[t], s=s_nodes, mu=mu_nodes,
                lo=domains[t].lo, hi=domains[t].hi, degree=degree,
            )

    vf = ValueFunction(domains=domains, degree=degree, coeffs=coeffs, disc=disc, ez=ez,
                       diagnostics=diag)
    m = points_per_dim if points_per_dim is not None else degree + 1
    s_approx, mu_approx = [], []
    for t in range(n):
        s_approx.append([fit_tensor(domains[t], degree, s_tab[t][d], points_per_dim=m)
                         for d in range(disc.n_states)])
        mu_approx.append([fit_tensor(domains[t], degree, mu_tab[t][d], points_per_dim=m)
                          for d in range(disc.n_states)])
    pol = PolicyTable(s_approx=s_approx, mu_approx=mu_approx, mu_max=params.mu_max)
    vf.diagnostics["s_nodes"] = s_tab
    vf.diagnostics["mu_nodes"] = mu_tab
    return vf, pol


def scc_stochastic(vf: ValueFunction, t: int, x, d: int, scc_unit_factor: float = 1000.0):
    """Social cost of carbon: marginal-value ratio -V_M / V_K, scaled to $/tC.

    Prices a marginal unit of atmospheric carbon already present at t
    ("stock" timing).  The deterministic ``scc_deterministic`` defaults
    to "emission" timing, which is this quantity one period later; pass
    ``timing="stock"`` there when comparing the two models.
    """
    _, g = vf.value_gradient(t, x, d, dims=(0, 1))
    g = np.atleast_2d(g)
    if np.any(g[:, 0] <= 0):
        raise DomainError("marginal value of capital must be positive for the SCC")
    out = -g[:, 1] / g[:, 0] * scc_unit_factor
    return float(out[0]) if out.size == 1 else out
