"""Robust decisions over finite scenario sets.

A scenario is a labeled bundle of calibration overrides.  The decision
space is a single savings and abatement path applied unchanged under
every scenario, and the layer offers four selection rules: maximize the
worst-case welfare, minimize the worst-case regret, maximize belief-
weighted expected welfare, and plain Monte Carlo over parameter beliefs
(re-solving per draw, with no expectation inside the model).

The worst-case objectives are nonsmooth in the decision path, so the
outer search runs quasi-Newton ascent on a log-sum-exp smoothing with a
decreasing temperature, then polishes on the exact min using the active
scenario's gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .calibration import Calibration
from .core import DomainError
from .det_solver import (
    Horizon,
    S_MAX,
    S_MIN,
    objective_gradient,
    solve_deterministic,
)
from .optimize import SolverError, minimize_box
from .simulate import QUANTILES, quantile_table

__all__ = [
    "Scenario",
    "ScenarioSet",
    "DecisionPath",
    "RobustDecision",
    "MonteCarloReport",
    "welfare_under",
    "max_min",
    "min_max_regret",
    "expected_welfare_decision",
    "monte_carlo",
]


@dataclass(frozen=True)
class Scenario:
    """A labeled calibration variant given by dotted-key overrides."""

    label: str
    overrides: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioSet:
    """Finite collection of scenarios over a shared base calibration."""

    base: Calibration
    scenarios: tuple
    weights: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        if not self.scenarios:
            raise DomainError("scenario set must contain at least one scenario")
        labels = [s.label for s in self.scenarios]
        if len(set(labels)) != len(labels):
            raise DomainError("scenario labels must be unique")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if len(w) != len(self.scenarios):
                raise DomainError("weights length must match scenario count")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise DomainError("weights must be nonnegative and sum to 1")
            object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.scenarios)

    @property
    def labels(self):
        return [s.label for s in self.scenarios]

    def materialize(self, i: int) -> Calibration:
        """Calibration for scenario i with its overrides applied."""
        sc = self.scenarios[i]
        if not sc.overrides:
            return self.base
        return self.base.with_overrides(dict(sc.overrides))


@dataclass(frozen=True)
class DecisionPath:
    """A fixed savings and abatement path, applied under every scenario."""

    s_path: np.ndarray
    mu_path: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s_path, dtype=float)
        mu = np.asarray(self.mu_path, dtype=float)
        if s.shape != mu.shape or s.ndim != 1:
            raise DomainError("s_path and mu_path must be 1-d and equal length")
        if np.any(s < S_MIN) or np.any(s > S_MAX):
            raise DomainError(f"savings path outside [{S_MIN}, {S_MAX}]")
        if np.any(mu < 0):
            raise DomainError("abatement path must be nonnegative")
        object.__setattr__(self, "s_path", s)
        object.__setattr__(self, "mu_path", mu)

    @property
    def n_periods(self):
        return len(self.s_path)

    def stacked(self):
        return np.concatenate([self.s_path, self.mu_path])


@dataclass(frozen=True)
class RobustDecision:
    """A robust decision path with its per-scenario evaluation."""

    decision: DecisionPath
    objective: float
    scenario_values: np.ndarray
    labels: list
    candidate_matrix: np.ndarray | None = None
    converged: bool = True


def welfare_under(decision: DecisionPath, cal: Calibration, horizon: Horizon) -> float:
    """Discounted welfare of a fixed decision path under one scenario."""
    w, _ = _welfare_grad(decision.stacked(), cal, horizon)
    return w


def _welfare_grad(z, cal: Calibration, horizon: Horizon):
    n = horizon.n_periods
    z = np.asarray(z, dtype=float)
    # abatement feasibility is scenario-specific; clip to its mu_max
    z = z.copy()
    z[n:] = np.minimum(z[n:], cal.params.mu_max)
    return objective_gradient(cal.params, cal.paths, horizon, cal.init_state, z)


def _scenario_optima(ss: ScenarioSet, horizon: Horizon, tol: float):
    cals = [ss.materialize(i) for i in range(len(ss))]
    optima = [solve_deterministic(c.params, c.paths, horizon, c.init_state, tol=tol) for c in cals]
    return cals, optima


def _evaluate_all(z, cals, horizon):
    ws, gs = [], []
    for cal in cals:
        w, g = _welfare_grad(z, cal, horizon)
        ws.append(w)
        gs.append(g)
    return np.array(ws), np.vstack(gs)


def _maximize_worst_case(cals, horizon, shifts, z0, mu_cap, tol):
    """Maximize min_s (welfare_s - shift_s) by annealed smoothing + polish.

    Smoothed stage: min is replaced by -T*log(sum exp(-v/T)), a lower
    bound that converges to the exact min as T drops; each stage warm
    starts the next.  Polish stage: exact min with the active scenario's
    gradient (a subgradient; L-BFGS-B tolerates the kinks well enough to
    improve the iterate, and the best exact-min point is kept).
    """
    n = horizon.n_periods
    lower = np.concatenate([np.full(n, S_MIN), np.zeros(n)])
    upper = np.concatenate([np.full(n, S_MAX), np.full(n, mu_cap)])
    z = np.clip(np.asarray(z0, dtype=float), lower, upper)

    ws0, _ = _evaluate_all(z, cals, horizon)
    v0 = ws0 - shifts
    spread = max(np.ptp(v0), abs(np.min(v0)) * 1e-3, 1.0)

    best = {"z": z.copy(), "f": np.min(v0)}

    def track(zz, vv):
        if vv > best["f"]:
            best["f"] = vv
            best["z"] = np.array(zz)

    for T in spread * np.array([1.0, 0.1, 0.01, 1e-3]):
        def neg_soft(zz, T=T):
            ws, gs = _evaluate_all(zz, cals, horizon)
            v = ws - shifts
            track(zz, np.min(v))
            m = np.min(v)
            p = np.exp(-(v - m) / T)
            psum = p.sum()
            f = m - T * np.log(psum)
            grad = (p / psum) @ gs
            return -f, -grad

        try:
            z, _, _ = minimize_box(neg_soft, z, lower, upper, tol=tol, max_iter=2000)
        except SolverError as err:
            z = err.best_x

    def neg_exact(zz):
        ws, gs = _evaluate_all(zz, cals, horizon)
        v = ws - shifts
        track(zz, np.min(v))
        i = int(np.argmin(v))
        return -v[i], -gs[i]

    converged = True
    try:
        z, _, _ = minimize_box(neg_exact, best["z"], lower, upper, tol=tol, max_iter=500)
    except SolverError:
        converged = len(cals) > 1  # kinks stall the polish; smoothed iterate stands
    return best["z"], best["f"], converged


def max_min(ss: ScenarioSet, horizon: Horizon, tol: float = 1e-6) -> RobustDecision:
    """Decision path maximizing the worst-case welfare over the scenarios."""
    cals, optima = _scenario_optima(ss, horizon, tol)
    mu_cap = max(c.params.mu_max for c in cals)
    z0, _ = _best_candidate(cals, optima, horizon, shifts=np.zeros(len(cals)))
    z, f, converged = _maximize_worst_case(cals, horizon, np.zeros(len(cals)), z0, mu_cap, tol)
    n = horizon.n_periods
    ws, _ = _evaluate_all(z, cals, horizon)
    return RobustDecision(
        decision=DecisionPath(z[:n], z[n:]),
        objective=float(np.min(ws)),
        scenario_values=ws,
        labels=ss.labels,
        converged=converged,
    )


def min_max_regret(ss: ScenarioSet, horizon: Horizon, tol: float = 1e-6) -> RobustDecision:
    """Decision path minimizing the worst-case regret over the scenarios.

    Regret under a scenario is that scenario's optimal welfare minus the
    welfare the fixed path achieves there.  Also reports the regret
    matrix of every scenario-optimal path evaluated as a candidate.
    """
    cals, optima = _scenario_optima(ss, horizon, tol)
    mu_cap = max(c.params.mu_max for c in cals)
    shifts = np.array([o.welfare for o in optima])
    z0, cand = _best_candidate(cals, optima, horizon, shifts)
    z, f, converged = _maximize_worst_case(cals, horizon, shifts, z0, mu_cap, tol)
    n = horizon.n_periods
    ws, _ = _evaluate_all(z, cals, horizon)
    regrets = shifts - ws
    return RobustDecision(
        decision=DecisionPath(z[:n], z[n:]),
        objective=float(np.max(regrets)),
        scenario_values=regrets,
        labels=ss.labels,
        candidate_matrix=cand,
        converged=converged,
    )


def _best_candidate(cals, optima, horizon, shifts):
    """Best scenario-optimal path by worst-case value, plus the full matrix.

    matrix[i, j] = shift_i - welfare of candidate j under scenario i,
    which is the regret matrix when shifts are the scenario optima.
    """
    n_s = len(cals)
    matrix = np.empty((n_s, n_s))
    for j, opt in enumerate(optima):
        z = np.concatenate([opt.s_path, opt.mu_path])
        for i, cal in enumerate(cals):
            w, _ = _welfare_grad(z, cal, horizon)
            matrix[i, j] = shifts[i] - w
    j_best = int(np.argmin(np.max(matrix, axis=0)))
    opt = optima[j_best]
    return np.concatenate([opt.s_path, opt.mu_path]), matrix


def expected_welfare_decision(ss: ScenarioSet, horizon: Horizon, tol: float = 1e-6) -> RobustDecision:
    """Decision path maximizing belief-weighted expected welfare.

    The expectation sits outside the model dynamics: one fixed path is
    scored against each scenario and the welfares are averaged, so the
    answer hedges across scenarios rather than optimizing any one.
    """
    if ss.weights is None:
        raise DomainError("expected_welfare_decision requires belief weights")
    cals = [ss.materialize(i) for i in range(len(ss))]
    mu_cap = max(c.params.mu_max for c in cals)
    n = horizon.n_periods
    lower = np.concatenate([np.full(n, S_MIN), np.zeros(n)])
    upper = np.concatenate([np.full(n, S_MAX), np.full(n, mu_cap)])

    def neg_expected(z):
        ws, gs = _evaluate_all(z, cals, horizon)
        return -(ss.weights @ ws), -(ss.weights @ gs)

    z0 = np.concatenate([np.full(n, 0.25), np.full(n, 0.5)])
    converged = True
    try:
        z, _, _ = minimize_box(neg_expected, z0, lower, upper, tol=tol, max_iter=5000)
    except SolverError as err:
        z, converged = err.best_x, False
    ws, _ = _evaluate_all(z, cals, horizon)
    return RobustDecision(
        decision=DecisionPath(z[:n], z[n:]),
        objective=float(ss.weights @ ws),
        scenario_values=ws,
        labels=ss.labels,
        converged=converged,
    )


@dataclass(frozen=True)
class MonteCarloReport:
    """Per-draw deterministic solutions under sampled parameter beliefs.

    Each draw re-solves the deterministic control problem at sampled
    parameter values; no expectation enters the model itself, so the
    spread reflects parameter belief only, not risk aversion.
    """

    draws: dict
    scc0: np.ndarray
    mu: np.ndarray
    T_AT: np.ndarray
    welfare: np.ndarray
    seed: int
    n_failed: int

    @property
    def n_draws(self):
        return len(self.scc0)

    def quantiles(self, name: str, qs=QUANTILES) -> np.ndarray:
        arr = getattr(self, name)
        arr = arr[:, None] if arr.ndim == 1 else arr
        return quantile_table(arr, qs)


def _sample_belief(spec, size, rng):
    kind = spec[0]
    if kind == "uniform":
        _, lo, hi = spec
        if not lo <= hi:
            raise DomainError(f"uniform belief needs lo <= hi, got {spec}")
        return rng.uniform(lo, hi, size)
    if kind == "triangular":
        _, lo, mode, hi = spec
        if not lo <= mode <= hi:
            raise DomainError(f"triangular belief needs lo <= mode <= hi, got {spec}")
        return rng.triangular(lo, mode, hi, size)
    if kind == "truncnorm":
        _, mean, sd, lo, hi = spec
        if sd <= 0 or not lo < hi:
            raise DomainError(f"truncnorm belief needs sd > 0 and lo < hi, got {spec}")
        out = np.empty(size)
        filled = 0
        while filled < size:  # rejection sampling; supports are a few sd wide
            x = rng.normal(mean, sd, max(size, 64))
            x = x[(x >= lo) & (x <= hi)]
            take = min(len(x), size - filled)
            out[filled : filled + take] = x[:take]
            filled += take
        return out
    raise DomainError(f"unknown belief kind {kind!r}")


def monte_carlo(
    base: Calibration,
    belief: Mapping[str, Sequence],
    n_draws: int,
    seed: int,
    horizon: Horizon,
    tol: float = 1e-6,
    max_failure_rate: float = 0.01,
) -> MonteCarloReport:
    """Solve the deterministic model once per belief draw.

    ``belief`` maps dotted calibration keys (e.g. ``"params.t2xco2"``)
    to a distribution spec tuple: ("uniform", lo, hi),
    ("triangular", lo, mode, hi), or ("truncnorm", mean, sd, lo, hi).
    """
    if n_draws < 1:
        raise DomainError("n_draws must be at least 1")
    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    draws = {name: _sample_belief(spec, n_draws, rng) for name, spec in belief.items()}

    n = horizon.n_periods
    scc0 = np.full(n_draws, np.nan)
    mu = np.full((n_draws, n), np.nan)
    T_AT = np.full((n_draws, n + 1), np.nan)
    welfare = np.full(n_draws, np.nan)
    failures = []
    guess = None
    for k in range(n_draws):
        cal = base.with_overrides({name: float(vals[k]) for name, vals in draws.items()})
        try:
            traj = solve_deterministic(
                cal.params, cal.paths, horizon, cal.init_state, guess=guess, tol=tol
            )
        except (SolverError, DomainError) as err:
            failures.append((k, str(err)))
            continue
        guess = traj  # warm start: draws are typically near one another
        scc0[k] = traj.scc_path[0]
        mu[k] = traj.mu_path
        T_AT[k] = [st.T[0] for st in traj.states]
        welfare[k] = traj.welfare
    if len(failures) > max_failure_rate * n_draws:
        detail = "; ".join(f"draw {k}: {msg}" for k, msg in failures[:5])
        raise SolverError(
            f"{len(failures)}/{n_draws} Monte Carlo draws failed to solve ({detail})"
        )
    ok = ~np.isnan(scc0)
    return MonteCarloReport(
        draws={k: v[ok] for k, v in draws.items()},
        scc0=scc0[ok],
        mu=mu[ok],
        T_AT=T_AT[ok],
        welfare=welfare[ok],
        seed=seed,
        n_failed=len(failures),
    )
