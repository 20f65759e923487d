"""Unit tests for the model primitives: production, damage, transitions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iamkit.calibration import load_calibration
from iamkit.core import (
    Decision,
    DomainError,
    ExogenousPaths,
    FeasibilityError,
    StateVector,
    abatement_cost,
    carbon_tax,
    damage_factor,
    emissions,
    gross_output,
    marginal_utility,
    net_output,
    radiative_forcing,
    step_state,
    utility,
)

from .conftest import CALIB

_CAL = load_calibration(CALIB)  # module-level copy for hypothesis examples


def test_gross_output_cobb_douglas_hand_value():
    # [DERIVED: hand computation]
    got = gross_output(2.0, 8.0, 27.0, 0.3)
    assert got == pytest.approx(2.0 * 8.0**0.3 * 27.0**0.7, rel=1e-14)


def test_gross_output_constant_returns():
    # [TRIVIAL: homogeneity of degree one in (K, L)]
    base = gross_output(1.3, 5.0, 11.0, 0.3)
    assert gross_output(1.3, 10.0, 22.0, 0.3) == pytest.approx(2.0 * base, rel=1e-13)


def test_damage_factor_zero_temperature(cal):
    # [TRIVIAL] no warming, no tipping -> no damage
    assert damage_factor(0.0, 0.0, cal.params) == pytest.approx(1.0)


def test_damage_factor_hand_value(cal):
    # [DERIVED: hand computation] (1-J)/(1 + pi1*T + pi2*T^2) at T=2, J=0.1
    p = cal.params
    expected = 0.9 / (1.0 + p.pi1 * 2.0 + p.pi2 * 4.0)
    assert damage_factor(2.0, 0.1, p) == pytest.approx(expected, rel=1e-14)


def test_damage_factor_weitzman_mode_lowers_output_share(cal):
    # [PAPER-qualitative: high-exponent damages are strictly more severe]
    p = cal.params.with_overrides(weitzman=True)
    assert damage_factor(3.0, 0.0, p) < damage_factor(3.0, 0.0, cal.params)


def test_abatement_cost_power_law(cal):
    # [TRIVIAL] cost = theta1 * mu^theta2 * Y
    p = cal.params
    assert abatement_cost(0.5, 0.07, p.theta2, 100.0) == pytest.approx(
        0.07 * 0.5**p.theta2 * 100.0, rel=1e-14
    )


def test_net_output_identity():
    # [TRIVIAL] Yhat = omega*Y - Psi
    assert net_output(0.97, 100.0, 1.5) == pytest.approx(95.5)


def test_emissions_formula():
    # [TRIVIAL] E = sigma*(1-mu)*Y + E_land
    assert emissions(0.1, 0.25, 400.0, 2.6) == pytest.approx(0.1 * 0.75 * 400.0 + 2.6)


def test_radiative_forcing_doubling(cal):
    # [TRIVIAL] at M_AT = 2*M* the log2 term contributes exactly eta
    p, paths = cal.params, cal.paths
    f2 = radiative_forcing(2.0 * p.M_AT_star, 0, p, paths)
    f1 = radiative_forcing(p.M_AT_star, 0, p, paths)
    assert f2 - f1 == pytest.approx(p.eta, rel=1e-13)


def test_utility_crra_hand_value():
    # [DERIVED: hand computation] L*(C/L)^(1-1/psi)/(1-1/psi), psi=0.5
    expected = 7.0 * (3.0 / 7.0) ** (-1.0) / (-1.0)
    assert utility(3.0, 7.0, 0.5) == pytest.approx(expected, rel=1e-14)


def test_utility_log_mode():
    # [TRIVIAL] psi=1 switches to L*log(C/L)
    assert utility(2.0, 1.0, 1.0, log_mode=True) == pytest.approx(np.log(2.0))


def test_marginal_utility_is_derivative():
    # [DERIVED: central finite difference oracle]
    psi, L, C, h = 0.69, 7.4, 3.1, 1e-6
    fd = (utility(C + h, L, psi) - utility(C - h, L, psi)) / (2 * h)
    assert marginal_utility(C, L, psi) == pytest.approx(fd, rel=1e-8)


def test_carbon_tax_formula(cal):
    # [TRIVIAL] theta1*theta2*mu^(theta2-1)/sigma
    p = cal.params
    expected = 0.07 * p.theta2 * 0.4 ** (p.theta2 - 1.0) / 0.09
    assert carbon_tax(0.4, 0.07, p.theta2, 0.09) == pytest.approx(expected, rel=1e-14)


def test_carbon_tax_rejects_zero_sigma(cal):
    with pytest.raises(DomainError):
        carbon_tax(0.4, 0.07, cal.params.theta2, 0.0)


def test_step_state_carbon_conservation(cal):
    # [TRIVIAL: invariant] full abatement and zero land emissions with a
    # column-stochastic Phi_M preserve total carbon exactly
    p, paths = cal.params, cal.paths
    paths_zero = ExogenousPaths(
        A=paths.A, L=paths.L, sigma=paths.sigma, theta1=paths.theta1,
        E_land=np.zeros_like(paths.E_land), F_ex=paths.F_ex,
    )
    st0 = StateVector(K=200.0, M=np.array([800.0, 400.0, 1700.0]), T=np.array([1.0, 0.1]))
    d = Decision(C=50.0, mu=1.0, mu_max=p.mu_max)
    st1 = step_state(st0, d, 0, p, paths_zero)
    assert st1.M.sum() == pytest.approx(st0.M.sum(), abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(
    K=st.floats(50.0, 1000.0),
    M_AT=st.floats(600.0, 1600.0),
    T_AT=st.floats(0.0, 6.0),
    s=st.floats(0.05, 0.5),
    mu=st.floats(0.0, 1.0),
)
def test_step_state_positive_stocks_property(K, M_AT, T_AT, s, mu):
    # [TRIVIAL: invariant] decisions consuming a fraction of net output
    # keep all stocks positive
    p, paths = _CAL.params, _CAL.paths
    st0 = StateVector(K=K, M=np.array([M_AT, 460.0, 1740.0]), T=np.array([T_AT, 0.1]))
    Y = gross_output(paths.A[0], K, paths.L[0], p.alpha)
    omega = damage_factor(T_AT, 0.0, p)
    Yhat = net_output(omega, Y, abatement_cost(mu, paths.theta1[0], p.theta2, Y))
    d = Decision(C=(1.0 - s) * Yhat, mu=mu, mu_max=p.mu_max)
    st1 = step_state(st0, d, 0, p, paths)
    assert st1.K > 0 and np.all(st1.M > 0)


def test_step_state_rejects_overconsumption(cal):
    p, paths = cal.params, cal.paths
    st0 = StateVector(K=1.0, M=np.array([800.0, 400.0, 1700.0]), T=np.array([1.0, 0.1]))
    with pytest.raises(FeasibilityError):
        step_state(st0, Decision(C=1e6, mu=0.0, mu_max=p.mu_max), 0, p, paths)


def test_state_vector_validation():
    with pytest.raises(DomainError):
        StateVector(K=-1.0, M=np.ones(3), T=np.zeros(2))
    with pytest.raises(DomainError):
        StateVector(K=1.0, M=np.array([1.0, -1.0, 1.0]), T=np.zeros(2))
