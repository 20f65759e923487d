"""Discrete stochastic structure: long-run risk chain, tipping chain,
and the recursive-preference aggregator.

The productivity shock (zeta, chi) follows a random walk with
stochastically persistent drift; it is discretized onto a bounded grid
so that all conditional expectations are finite.  The climate tipping
process is an absorbing Markov chain whose first transition hazard
depends on atmospheric temperature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .calibration import LrrParams, TippingSpec
from .core import DomainError

__all__ = [
    "ConfigurationError",
    "MarkovChain",
    "LrrChain",
    "TippingChain",
    "EZParams",
    "discretize_lrr",
    "tipping_probability",
    "build_tipping_chain",
    "ez_aggregate",
    "ez_continuation",
]

N_TRANSIENT_STAGES = 4


class ConfigurationError(ValueError):
    """A chain configuration cannot represent the requested process."""


@dataclass(frozen=True)
class MarkovChain:
    """Finite chain: node values and a row-stochastic transition matrix."""

    nodes: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "P", np.asarray(self.P, dtype=float))
        if self.P.ndim != 2 or self.P.shape[0] != self.P.shape[1]:
            raise DomainError("P must be square")
        if len(self.nodes) != self.P.shape[0]:
            raise DomainError("nodes and P size mismatch")
        if np.any(self.P < 0):
            raise DomainError("transition probabilities must be nonnegative")
        rowsums = self.P.sum(axis=1)
        if np.max(np.abs(rowsums - 1.0)) > 1e-12:
            raise DomainError(f"chain rows must sum to 1, worst {rowsums}")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]


@dataclass(frozen=True)
class LrrChain(MarkovChain):
    """Product chain over (zeta, chi); nodes has shape (n_zeta*n_chi, 2)."""

    zeta_values: np.ndarray = None
    chi_values: np.ndarray = None
    drift_persistence: float = 0.0

    @property
    def n_zeta(self):
        return len(self.zeta_values)

    @property
    def n_chi(self):
        return len(self.chi_values)

    def state_index(self, i_zeta: int, i_chi: int) -> int:
        return i_zeta * self.n_chi + i_chi


def _grid_cell_probs(grid: np.ndarray, mean, sd: float) -> np.ndarray:
    """Mass of N(mean, sd) over the cells of a 1-D grid, tails lumped at edges.

    ``mean`` may be an array; returns shape (len(mean), len(grid)).
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    m = len(grid)
    if m == 1:
        return np.ones((len(mean), 1))
    if sd == 0.0:
        # deterministic transition snapped to the nearest grid point
        out = np.zeros((len(mean), m))
        snapped = np.argmin(np.abs(grid[None, :] - mean[:, None]), axis=1)
        out[np.arange(len(mean)), snapped] = 1.0
        return out
    edges = (grid[1:] + grid[:-1]) / 2.0
    cdf = norm.cdf((edges[None, :] - mean[:, None]) / sd)
    out = np.empty((len(mean), m))
    out[:, 0] = cdf[:, 0]
    out[:, 1:-1] = np.diff(cdf, axis=1)
    out[:, -1] = 1.0 - cdf[:, -1]
    return out


def discretize_lrr(p: LrrParams) -> LrrChain:
    """Bounded Markov chain for the productivity shock and its drift.

    The drift chi is an AR(1) discretized on a grid spanning
    ``truncation_k`` stationary standard deviations; log zeta drifts by
    chi with innovation volatility varrho, cell masses integrated from
    the (tail-lumped, hence bounded) normal.
    """
    if p.varsigma > 0:
        sd_chi = p.varsigma / np.sqrt(1.0 - p.r**2)
        if p.n_chi < 2:
            raise ConfigurationError("n_chi must be >= 2 when varsigma > 0")
        chi_vals = np.linspace(-p.truncation_k * sd_chi, p.truncation_k * sd_chi, p.n_chi)
    else:
        chi_vals = np.zeros(1)
    P_chi = _grid_cell_probs(chi_vals, p.r * chi_vals, p.varsigma)

    if p.log_zeta_span is not None:
        span = p.log_zeta_span
    else:
        sd_chi = p.varsigma / np.sqrt(1.0 - p.r**2) if p.varsigma > 0 else 0.0
        span = max(3.0 * p.truncation_k * p.varrho, 12.0 * sd_chi, 1e-8)
    if p.varrho > 0 or p.varsigma > 0:
        if p.n_zeta < 2:
            raise ConfigurationError("n_zeta must be >= 2 for a stochastic zeta")
        if span < p.truncation_k * p.varrho:
            raise ConfigurationError(
                f"log zeta span {span} cannot cover one truncated innovation "
                f"{p.truncation_k * p.varrho}"
            )
        z_vals = np.linspace(-span, span, p.n_zeta)
    else:
        z_vals = np.zeros(max(p.n_zeta, 1)) if p.n_zeta == 1 else np.linspace(-span, span, p.n_zeta)

    n_z, n_c = len(z_vals), len(chi_vals)
    N = n_z * n_c
    P = np.zeros((N, N))
    for i in range(n_z):
        # next log zeta mean depends on the current drift state
        Pz = _grid_cell_probs(z_vals, z_vals[i] + chi_vals, p.varrho)  # (n_c, n_z)
        for j in range(n_c):
            P[i * n_c + j] = np.einsum("k,l->kl", Pz[j], P_chi[j]).ravel()
    nodes = np.stack(
        [np.repeat(np.exp(z_vals), n_c), np.tile(chi_vals, n_z)], axis=-1
    )
    return LrrChain(
        nodes=nodes, P=P, zeta_values=np.exp(z_vals), chi_values=chi_vals,
        drift_persistence=p.r,
    )


def tipping_probability(T_AT, params) -> float:
    """Per-period probability 1 - exp(-lambda * max(0, T_AT - T_bar))."""
    lam = params.lambda_tip if hasattr(params, "lambda_tip") else params
    excess = np.maximum(0.0, np.asarray(T_AT, dtype=float) - params.T_bar)
    return 1.0 - np.exp(-params.lambda_tip * excess)


@dataclass(frozen=True)
class TippingChain:
    """Absorbing tipping chain with a temperature-dependent entry hazard.

    State 0 is pre-tipping.  On entry a terminal damage level is drawn
    from ``level_dist``; the four transient stages then ramp damage
    linearly toward the drawn level before the absorbing stage.
    ``levels[j]`` is the damage attached to state j.
    """

    levels: np.ndarray
    stage_of: np.ndarray  # 0 = pre, 1..4 = transient, 5 = absorbing
    terminal_levels: np.ndarray
    level_dist: np.ndarray
    advance_prob: float
    lambda_tip: float
    T_bar: float
    Gamma_bar: float
    step_years: float

    @property
    def n_states(self) -> int:
        return len(self.levels)

    def entry_state(self, level_index: int) -> int:
        return 1 + level_index * (N_TRANSIENT_STAGES + 1)

    def successors(self, j: int, T_AT: float):
        """Successor state indices and probabilities from state j."""
        if self.stage_of[j] == 0:
            p_tip = tipping_probability(T_AT, self)
            idx = [0] + [self.entry_state(l) for l in range(len(self.terminal_levels))]
            probs = np.concatenate(([1.0 - p_tip], p_tip * self.level_dist))
            return np.array(idx), probs
        if self.stage_of[j] == N_TRANSIENT_STAGES + 1:
            return np.array([j]), np.array([1.0])
        return np.array([j, j + 1]), np.array([1.0 - self.advance_prob, self.advance_prob])

    def P(self, T_AT: float) -> np.ndarray:
        """Dense transition matrix at atmospheric temperature T_AT."""
        n = self.n_states
        P = np.zeros((n, n))
        for j in range(n):
            idx, probs = self.successors(j, T_AT)
            P[j, idx] += probs
        return P


def build_tipping_chain(params, spec: TippingSpec | None = None) -> TippingChain:
    """Construct the tipping chain from hazard/duration/level calibration.

    The per-period advance probability of each transient stage is the
    geometric rate whose mean duration equals the exponential stage mean
    Gamma_bar/4 (for vanishing step size this is the standard hazard
    conversion 1 - exp(-4*step/Gamma_bar)).
    """
    if spec is not None:
        levels_term = np.asarray(spec.levels, dtype=float)
        weights = np.asarray(spec.weights, dtype=float)
        D_bar, q = spec.D_inf_bar, spec.q
        lam, T_bar, Gamma_bar = spec.lambda_tip, spec.T_bar, spec.Gamma_bar
    else:
        levels_term = np.array([params.D_inf_bar])
        weights = np.array([1.0])
        D_bar, q = params.D_inf_bar, params.q
        lam, T_bar, Gamma_bar = params.lambda_tip, params.T_bar, params.Gamma_bar
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-10:
        raise ConfigurationError("level weights must be a probability vector")
    mean = float(weights @ levels_term)
    var = float(weights @ (levels_term - mean) ** 2)
    if abs(mean - D_bar) > 1e-10 or abs(var - q * D_bar**2) > 1e-10:
        raise ConfigurationError(
            f"level distribution moments ({mean}, {var}) do not match "
            f"(D_inf_bar, q*D_inf_bar^2) = ({D_bar}, {q * D_bar ** 2})"
        )
    step = params.step_years
    advance = min(1.0, 4.0 * step / Gamma_bar)

    n_levels = len(levels_term)
    n_states = 1 + n_levels * (N_TRANSIENT_STAGES + 1)
    levels = np.zeros(n_states)
    stage = np.zeros(n_states, dtype=int)
    for l, D in enumerate(levels_term):
        base = 1 + l * (N_TRANSIENT_STAGES + 1)
        for s in range(1, N_TRANSIENT_STAGES + 1):
            levels[base + s - 1] = D * s / (N_TRANSIENT_STAGES + 1)
            stage[base + s - 1] = s
        levels[base + N_TRANSIENT_STAGES] = D
        stage[base + N_TRANSIENT_STAGES] = N_TRANSIENT_STAGES + 1
    return TippingChain(
        levels=levels,
        stage_of=stage,
        terminal_levels=levels_term,
        level_dist=weights,
        advance_prob=advance,
        lambda_tip=lam,
        T_bar=T_bar,
        Gamma_bar=Gamma_bar,
        step_years=step,
    )


@dataclass(frozen=True)
class EZParams:
    """Recursive-preference parameters; Theta and Xi are always derived."""

    beta: float
    psi: float
    gamma: float

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ConfigurationError(f"beta must be in (0,1), got {self.beta}")
        if self.psi <= 0:
            raise ConfigurationError(f"psi must be positive, got {self.psi}")
        if abs(self.psi - 1.0) < 1e-12 and abs(self.gamma - 1.0) > 1e-12:
            raise ConfigurationError(
                "psi = 1 is only supported in the time-separable log case "
                f"gamma = 1, got gamma = {self.gamma}"
            )
        if self.gamma <= 0:
            raise ConfigurationError(f"gamma must be positive, got {self.gamma}")

    @property
    def Theta(self) -> float:
        return (1.0 - self.gamma) / (1.0 - 1.0 / self.psi)

    @property
    def Xi(self) -> float:
        return 1.0 if self.psi > 1.0 else -1.0


def _certainty_equivalent(cont_values, probs, ez: EZParams, power: float):
    """Stable [sum p (Xi*V)^power]^(1/power), factored by the max."""
    xv = ez.Xi * np.asarray(cont_values, dtype=float)
    if np.any(xv <= 0):
        raise DomainError(
            "sign violation: Xi * continuation values must be positive"
        )
    top = np.max(xv, axis=-1, keepdims=True)
    inner = np.sum(probs * (xv / top) ** power, axis=-1)
    return np.squeeze(top, axis=-1) * inner ** (1.0 / power)


def ez_aggregate(u_now, cont_values, probs, ez: EZParams):
    """Recursive welfare from current utility and the continuation lottery.

    U = Xi * {(1-beta) Xi u + beta [E{(Xi U+)^(1-gamma)}]^(1/Theta)}^(1/(1-1/psi)).
    """
    probs = np.asarray(probs, dtype=float)
    if abs(probs.sum() - 1.0) > 1e-10 or np.any(probs < 0):
        raise DomainError("probs must be a probability vector")
    ce = _certainty_equivalent(cont_values, probs, ez, 1.0 - ez.gamma)
    # [E{(Xi U+)^(1-gamma)}]^(1/Theta) = ce^(1-1/psi)
    p = 1.0 - 1.0 / ez.psi
    inner = (1.0 - ez.beta) * ez.Xi * np.asarray(u_now, dtype=float) + ez.beta * ce**p
    if np.any(np.asarray(inner) <= 0):
        raise DomainError("aggregator interior must be positive; check signs")
    return ez.Xi * inner ** (1.0 / p)


def ez_continuation(cont_values, probs, ez: EZParams):
    """Bellman continuation term (beta/Xi)[E{(Xi V+)^Theta}]^(1/Theta).

    ``cont_values`` are next-period value-function draws in utility
    units; broadcasting applies over leading axes.
    """
    ce = _certainty_equivalent(cont_values, probs, ez, ez.Theta)
    # ce is the positive certainty equivalent of Xi*V; dividing by Xi
    # restores the sign of the value function itself.
    return ez.beta / ez.Xi * ce
