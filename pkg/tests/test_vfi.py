"""Value function iteration on small instances: structure and limits."""

import numpy as np
import pytest

from iamkit.calibration import TippingSpec
from iamkit.det_solver import Horizon, solve_deterministic
from iamkit.stochastic import build_tipping_chain, discretize_lrr
from iamkit.vfi import (
    DiscreteStates,
    default_domains,
    scc_stochastic,
    solve_vfi,
    terminal_value,
)
from iamkit.calibration import LrrParams


@pytest.fixture(scope="module")
def ts_params(cal):
    # time-separable preferences: gamma = 1/psi
    return cal.params.with_overrides(gamma=1.0 / cal.params.psi)


@pytest.fixture(scope="module")
def vfi3(cal, ts_params):
    hor = Horizon(n_periods=3)
    vf, pol = solve_vfi(
        cal.params.with_overrides(gamma=1.0 / cal.params.psi), cal.paths, hor,
        cal.init_state, degree=3, multistart=2,
    )
    det = solve_deterministic(ts_params, cal.paths, hor, cal.init_state)
    return hor, vf, pol, det


def test_discrete_states_indexing(cal):
    lrr = discretize_lrr(LrrParams(varrho=0.02, r=0.775, varsigma=0.008, n_zeta=3, n_chi=3))
    tip = build_tipping_chain(cal.params, cal.tipping)
    disc = DiscreteStates(lrr=lrr, tip=tip)
    assert disc.n_states == lrr.n_states * tip.n_states
    d = 5 * tip.n_states + 7
    assert disc.split(d) == (5, 7)


def test_default_domains_contain_optimal_path(cal, ts_params):
    # [TRIVIAL: invariant] the deterministic optimal trajectory lies
    # strictly inside every period's approximation box
    hor = Horizon(n_periods=8)
    det = solve_deterministic(ts_params, cal.paths, hor, cal.init_state)
    doms = default_domains(ts_params, cal.paths, cal.init_state, 8, DiscreteStates())
    for t, st in enumerate(det.states):
        x = st.continuous()
        assert np.all(x >= doms[t].lo - 1e-9), f"t={t} below box"
        assert np.all(x <= doms[t].hi + 1e-9), f"t={t} above box"


def test_terminal_value_negative_and_finite(cal, ts_params):
    doms = default_domains(ts_params, cal.paths, cal.init_state, 2, DiscreteStates())
    coeffs, node_vals = terminal_value(
        ts_params, cal.paths, 2, doms[2], 3, DiscreteStates(), points_per_dim=4
    )
    assert np.all(np.isfinite(node_vals))
    assert np.all(node_vals < 0)  # psi < 1 keeps utility negative


def test_vfi_matches_deterministic_short_horizon(vfi3, cal):
    # [DERIVED: deterministic-limit oracle] no chains, gamma = 1/psi
    hor, vf, pol, det = vfi3
    x = cal.init_state.continuous()
    s0, mu0 = pol.decide(0, x, 0)
    assert float(np.squeeze(s0)) == pytest.approx(det.s_path[0], abs=0.02)
    assert float(np.squeeze(mu0)) == pytest.approx(det.mu_path[0], abs=0.02)


def test_vfi_policy_replay_tracks_optimum(vfi3, cal):
    # replaying the fitted policies through the transitions stays near
    # the deterministic optimal state path
    from iamkit.core import Decision, StateVector, step_state, gross_output, damage_factor, net_output, abatement_cost

    hor, vf, pol, det = vfi3
    p = cal.params.with_overrides(gamma=1.0 / cal.params.psi)
    st = cal.init_state
    for t in range(hor.n_periods):
        x = st.continuous()
        s, mu = (float(np.squeeze(v)) for v in pol.decide(t, x, 0))
        Y = gross_output(cal.paths.A[t], st.K, cal.paths.L[t], p.alpha)
        om = damage_factor(st.T[0], 0.0, p)
        Yhat = net_output(om, Y, abatement_cost(mu, cal.paths.theta1[t], p.theta2, Y))
        st = step_state(st, Decision(C=(1 - s) * Yhat, mu=mu, mu_max=p.mu_max), t, p, cal.paths)
        ref = det.states[t + 1]
        assert st.K == pytest.approx(ref.K, rel=0.02)
        assert st.M[0] == pytest.approx(ref.M[0], rel=0.01)


def test_scc_stochastic_matches_det_stock_timing(vfi3, cal, ts_params):
    # [DERIVED: adjoint oracle] value-gradient SCC at t=1 equals the
    # stock-timing deterministic SCC at t=1 on the same trajectory
    from iamkit.det_solver import scc_deterministic

    hor, vf, pol, det = vfi3
    stock = scc_deterministic(ts_params, cal.paths, hor, det, timing="stock")
    x1 = det.states[1].continuous()
    got = scc_stochastic(vf, 1, x1, 0)
    assert got == pytest.approx(stock[1], rel=0.03)


def test_vfi_value_matches_deterministic_welfare(vfi3, cal, ts_params):
    # V(0, x0) should approximate total discounted welfare of the optimum
    # (same terminal continuation rule)
    hor, vf, pol, det = vfi3
    v0 = vf.value(0, cal.init_state.continuous(), 0)
    assert v0 == pytest.approx(det.welfare, rel=1e-3)


def test_vfi_rejects_log_utility_with_ez(cal):
    from iamkit.core import DomainError

    p = cal.params.with_overrides(log_utility=True, psi=1.0, gamma=10.0)
    with pytest.raises(DomainError):
        solve_vfi(p, cal.paths, Horizon(n_periods=1), cal.init_state, degree=2)


def test_tipping_chain_successor_probabilities(cal):
    # [TRIVIAL] pre-tipping successor mass equals the hazard split over
    # entry states plus staying put
    tip = build_tipping_chain(cal.params, cal.tipping)
    T = 2.0
    idx, probs = tip.successors(0, T)
    from iamkit.stochastic import tipping_probability

    h = tipping_probability(T, cal.params)
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)
    stay = probs[list(idx).index(0)]
    assert stay == pytest.approx(1.0 - h, rel=1e-12)
