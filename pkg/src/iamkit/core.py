"""Closed forms and single-step transition laws of the climate-economy model.

Everything here is a pure function of its inputs.  Units convention:
carbon in GtC, temperature in degrees C above preindustrial, output and
consumption in trillions of constant dollars per period, population in
millions, one period = ``step_years`` years.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ModelParams",
    "ExogenousPaths",
    "StateVector",
    "Decision",
    "DomainError",
    "FeasibilityError",
    "gross_output",
    "damage_factor",
    "abatement_cost",
    "emissions",
    "net_output",
    "radiative_forcing",
    "step_state",
    "utility",
    "marginal_utility",
    "carbon_tax",
]


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation."""


class FeasibilityError(ValueError):
    """A decision violates a feasibility constraint (e.g. exhausts capital)."""


@dataclass(frozen=True)
class ModelParams:
    """Scalar and matrix parameters of the economy, climate and tipping process.

    ``beta`` is the discount factor per period.  ``psi`` is the
    intertemporal elasticity of substitution and ``gamma`` the risk
    aversion used by the recursive-preference solvers.  ``Phi_M`` and
    ``Phi_T`` are the per-period carbon and temperature transfer
    matrices.  Tipping fields (``lambda_tip``, ``T_bar``, ``Gamma_bar``,
    ``D_inf_bar``, ``q``) parameterize the hazard, threshold, mean
    transition duration in years, and the mean / relative variance of
    the long-run tipping damage.
    """

    beta: float
    psi: float
    delta: float
    alpha: float
    pi1: float
    pi2: float
    theta2: float
    eta: float
    M_AT_star: float
    xi1: float
    Phi_M: np.ndarray
    Phi_T: np.ndarray
    gamma: float = 10.0
    pi_hi: float = 0.0
    exp_hi: float = 6.754
    weitzman: bool = False
    lambda_tip: float = 0.0
    T_bar: float = 1.0
    Gamma_bar: float = 50.0
    D_inf_bar: float = 0.1
    q: float = 0.125
    mu_max: float = 1.0
    step_years: float = 5.0
    log_utility: bool = False
    scc_unit_factor: float = 1000.0

    def __post_init__(self):
        object.__setattr__(self, "Phi_M", np.asarray(self.Phi_M, dtype=float))
        object.__setattr__(self, "Phi_T", np.asarray(self.Phi_T, dtype=float))
        self.validate()

    def validate(self):
        if not 0.0 < self.beta < 1.0:
            raise DomainError(f"beta must be in (0,1), got {self.beta}")
        if self.psi <= 0:
            raise DomainError(f"psi must be positive, got {self.psi}")
        if abs(self.psi - 1.0) < 1e-12 and not self.log_utility:
            raise DomainError("psi=1 requires log_utility mode")
        if not 0.0 <= self.delta <= 1.0:
            raise DomainError(f"delta must be in [0,1], got {self.delta}")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must be in (0,1), got {self.alpha}")
        if self.theta2 <= 1.0:
            raise DomainError(f"theta2 must exceed 1, got {self.theta2}")
        if self.Phi_M.shape != (3, 3):
            raise DomainError("Phi_M must be 3x3")
        if self.Phi_T.shape != (2, 2):
            raise DomainError("Phi_T must be 2x2")
        colsums = self.Phi_M.sum(axis=0)
        if np.max(np.abs(colsums - 1.0)) > 1e-9:
            raise DomainError(
                f"Phi_M columns must sum to 1 (mass conservation), got {colsums}"
            )
        if self.lambda_tip < 0:
            raise DomainError("lambda_tip must be nonnegative")
        if self.Gamma_bar <= 0:
            raise DomainError("Gamma_bar must be positive")
        if not 0.0 <= self.D_inf_bar < 1.0:
            raise DomainError("D_inf_bar must be in [0,1)")
        if self.q < 0:
            raise DomainError("q must be nonnegative")

    def with_overrides(self, **kwargs) -> "ModelParams":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class ExogenousPaths:
    """Per-period exogenous series, all the same length.

    A: productivity (per-period output scale), L: population (millions),
    sigma: carbon intensity (GtC per unit of gross output), theta1:
    adjusted backstop cost factor, E_land: land emissions (GtC/period),
    F_ex: exogenous forcing (W/m^2).
    """

    A: np.ndarray
    L: np.ndarray
    sigma: np.ndarray
    theta1: np.ndarray
    E_land: np.ndarray
    F_ex: np.ndarray

    def __post_init__(self):
        for name in ("A", "L", "sigma", "theta1", "E_land", "F_ex"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.A)
        for name in ("L", "sigma", "theta1", "E_land", "F_ex"):
            if len(getattr(self, name)) != n:
                raise DomainError(f"path {name} has length {len(getattr(self, name))}, expected {n}")
        if np.any(self.L <= 0):
            raise DomainError("L must be positive elementwise")
        if np.any(self.A <= 0):
            raise DomainError("A must be positive elementwise")
        if np.any(self.sigma < 0):
            raise DomainError("sigma must be nonnegative elementwise")
        if np.any(self.theta1 < 0):
            raise DomainError("theta1 must be nonnegative elementwise")

    def __len__(self) -> int:
        return len(self.A)

    def shift(self, t: int) -> "ExogenousPaths":
        """The same paths starting t periods later."""
        if not 0 <= t < len(self):
            raise DomainError(f"shift {t} outside path length {len(self)}")
        return ExogenousPaths(
            A=self.A[t:], L=self.L[t:], sigma=self.sigma[t:],
            theta1=self.theta1[t:], E_land=self.E_land[t:], F_ex=self.F_ex[t:],
        )


@dataclass(frozen=True)
class StateVector:
    """Six continuous coordinates plus the stochastic coordinates.

    ``zeta`` multiplies productivity, ``chi`` is its drift state,
    ``J_index`` indexes the tipping chain (0 = pre-tipping).
    """

    K: float
    M: np.ndarray
    T: np.ndarray
    zeta: float = 1.0
    chi: float = 0.0
    J_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "M", np.asarray(self.M, dtype=float))
        object.__setattr__(self, "T", np.asarray(self.T, dtype=float))
        if self.K <= 0:
            raise DomainError(f"capital must be positive, got {self.K}")
        if self.M.shape != (3,) or np.any(self.M <= 0):
            raise DomainError("M must be a positive 3-vector")
        if self.T.shape != (2,):
            raise DomainError("T must be a 2-vector")
        if self.zeta <= 0:
            raise DomainError("zeta must be positive")

    @property
    def M_AT(self) -> float:
        return float(self.M[0])

    @property
    def T_AT(self) -> float:
        return float(self.T[0])

    def continuous(self) -> np.ndarray:
        """The six continuous coordinates (K, M_AT, M_UO, M_DO, T_AT, T_OC)."""
        return np.concatenate(([self.K], self.M, self.T))


@dataclass(frozen=True)
class Decision:
    """Consumption level and emission control rate for one period."""

    C: float
    mu: float
    mu_max: float = 1.0

    def __post_init__(self):
        if self.C <= 0:
            raise DomainError(f"consumption must be positive, got {self.C}")
        if not 0.0 <= self.mu <= self.mu_max:
            raise DomainError(f"mu={self.mu} outside [0, {self.mu_max}]")


def gross_output(A: float, K, L: float, alpha: float):
    """Cobb-Douglas gross production A * K**alpha * L**(1-alpha)."""
    if A <= 0 or L <= 0 or np.any(np.asarray(K) <= 0):
        raise DomainError("gross_output requires positive A, K, L")
    return A * K ** alpha * L ** (1.0 - alpha)


def _damage_denominator(T_AT, params: ModelParams):
    d = 1.0 + params.pi1 * T_AT + params.pi2 * T_AT ** 2
    if params.weitzman:
        d = d + params.pi_hi * np.abs(T_AT) ** params.exp_hi
    return d


def damage_factor(T_AT, tip_damage: float, params: ModelParams):
    """Fraction of gross output kept after warming and tipping damage.

    Returns (1 - tip_damage) / (1 + pi1*T + pi2*T^2), with an optional
    high-exponent term in the denominator when Weitzman mode is on.
    """
    if not 0.0 <= tip_damage < 1.0:
        raise DomainError(f"tip_damage must be in [0,1), got {tip_damage}")
    d = _damage_denominator(T_AT, params)
    if np.any(np.asarray(d) <= 0):
        raise DomainError("damage denominator must be positive")
    return (1.0 - tip_damage) / d


def abatement_cost(mu, theta1: float, theta2: float, Y):
    """Mitigation expenditure theta1 * mu**theta2 * Y."""
    if np.any(np.asarray(mu) < 0):
        raise DomainError("mu must be nonnegative")
    return theta1 * mu ** theta2 * Y


def emissions(sigma: float, mu, Y, E_land: float):
    """Industrial plus land carbon emissions, GtC per period."""
    return sigma * (1.0 - mu) * Y + E_land


def net_output(omega, Y, Psi):
    """Output net of climate damage and abatement expenditure.

    May be nonpositive; consumption feasibility is the caller's job.
    """
    return omega * Y - Psi


def radiative_forcing(M_AT, t: int, params: ModelParams, paths: ExogenousPaths):
    """Total radiative forcing eta*log2(M_AT / M*) + F_ex[t], W/m^2."""
    if np.any(np.asarray(M_AT) <= 0):
        raise DomainError("M_AT must be positive")
    return params.eta * np.log2(M_AT / params.M_AT_star) + paths.F_ex[t]


def utility(C, L: float, psi: float, log_mode: bool = False):
    """Period utility L*(C/L)^(1-1/psi)/(1-1/psi), or L*log(C/L) when psi=1."""
    if np.any(np.asarray(C) <= 0) or L <= 0:
        raise DomainError("utility requires positive C and L")
    if log_mode or abs(psi - 1.0) < 1e-12:
        return L * np.log(C / L)
    p = 1.0 - 1.0 / psi
    return L * (C / L) ** p / p


def marginal_utility(C, L: float, psi: float, log_mode: bool = False):
    """d utility / d C."""
    if log_mode or abs(psi - 1.0) < 1e-12:
        return L / C
    return (C / L) ** (-1.0 / psi)


def carbon_tax(mu, theta1_t: float, theta2: float, sigma_t: float):
    """Optimal carbon tax theta1*theta2*mu^(theta2-1)/sigma, model units per GtC."""
    if sigma_t <= 0:
        raise DomainError("carbon tax undefined when sigma is zero")
    if np.any(np.asarray(mu) < 0):
        raise DomainError("mu must be nonnegative")
    return theta1_t * theta2 * mu ** (theta2 - 1.0) / sigma_t


def step_state(
    s: StateVector,
    d: Decision,
    t: int,
    params: ModelParams,
    paths: ExogenousPaths,
    tip_damage: float = 0.0,
) -> StateVector:
    """Advance the six continuous states one period.

    The stochastic coordinates pass through unchanged; the chain modules
    own their transitions.  ``tip_damage`` is the damage level attached
    to the current tipping state.
    """
    Y = gross_output(paths.A[t] * s.zeta, s.K, paths.L[t], params.alpha)
    omega = damage_factor(s.T_AT, tip_damage, params)
    Psi = abatement_cost(d.mu, paths.theta1[t], params.theta2, Y)
    Yhat = net_output(omega, Y, Psi)
    K_next = (1.0 - params.delta) * s.K + Yhat - d.C
    if K_next <= 0:
        raise FeasibilityError(
            f"consumption {d.C} infeasible at t={t}: next capital {K_next} <= 0"
        )
    E = emissions(paths.sigma[t], d.mu, Y, paths.E_land[t])
    M_next = params.Phi_M @ s.M + np.array([E, 0.0, 0.0])
    F = radiative_forcing(s.M_AT, t, params, paths)
    T_next = params.Phi_T @ s.T + np.array([params.xi1 * F, 0.0])
    return StateVector(
        K=K_next, M=M_next, T=T_next, zeta=s.zeta, chi=s.chi, J_index=s.J_index
    )
