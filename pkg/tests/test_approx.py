"""Chebyshev approximation: exactness, gradients, time-varying domains."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iamkit.approx import (
    ChebApprox,
    Domain,
    basis_matrix,
    build_time_varying_domains,
    cheb_nodes,
    cheb_nodes_1d,
    complete_indices,
    fit_tensor,
)
from iamkit.core import DomainError


def test_cheb_nodes_1d_are_gauss_points():
    # [DERIVED: closed form] cos((2k-1)pi/(2m)), ascending
    m = 5
    nodes = cheb_nodes_1d(m)
    expected = np.sort(np.cos((2 * np.arange(1, m + 1) - 1) * np.pi / (2 * m)))
    assert np.allclose(nodes, expected, atol=1e-15)


def test_complete_indices_count():
    # [DERIVED: binomial count] C(dim+deg, deg) terms in the complete basis
    from math import comb

    for dim, deg in [(2, 3), (4, 2), (6, 4)]:
        assert len(complete_indices(dim, deg)) == comb(dim + deg, deg)


def test_polynomial_round_trip_exact():
    # [TRIVIAL: exactness] a degree-3 polynomial is reproduced to 1e-12
    dom = Domain(lo=[-2.0, 0.5], hi=[1.0, 3.0])

    def poly(x):
        return 1.3 - 0.7 * x[:, 0] + 0.2 * x[:, 1] ** 3 + x[:, 0] * x[:, 1]

    nodes = cheb_nodes(dom, 4)
    approx = fit_tensor(dom, 3, poly(nodes), points_per_dim=4)
    rng = np.random.default_rng(3)
    pts = rng.uniform(dom.lo, dom.hi, size=(200, 2))
    assert np.max(np.abs(approx.eval(pts) - poly(pts))) < 1e-12


def test_gradient_matches_finite_differences():
    # [DERIVED: central finite difference oracle]
    dom = Domain(lo=[-1.0, -1.0, 0.0], hi=[2.0, 1.0, 5.0])
    rng = np.random.default_rng(11)
    nodes = cheb_nodes(dom, 5)
    vals = np.sin(nodes[:, 0]) + nodes[:, 1] * nodes[:, 2] ** 2
    approx = fit_tensor(dom, 4, vals, points_per_dim=5)
    x = rng.uniform(dom.lo + 0.1, dom.hi - 0.1, size=(20, 3))
    _, grads = approx.eval_with_gradient(x)
    h = 1e-6
    for dim in range(3):
        e = np.zeros(3)
        e[dim] = h
        fd = (approx.eval(x + e) - approx.eval(x - e)) / (2 * h)
        rel = np.abs(grads[:, dim] - fd) / np.maximum(np.abs(fd), 1.0)
        assert np.max(rel) < 1e-6


def test_basis_matrix_selected_derivative_dims():
    # [TRIVIAL: consistency] partial derivative matrices agree with the
    # full set when only a subset is requested
    dom = Domain(lo=[0.0, 0.0], hi=[1.0, 2.0])
    x = np.array([[0.2, 1.5], [0.9, 0.3]])
    _, d_all = basis_matrix(dom, 3, x, derivatives=True)
    _, d_sub = basis_matrix(dom, 3, x, derivatives=True, deriv_dims=(1,))
    assert np.allclose(d_sub[0], d_all[1], atol=0)


def test_domain_validation():
    with pytest.raises(DomainError):
        Domain(lo=[0.0, 1.0], hi=[1.0, 1.0])


def test_domain_clamp():
    dom = Domain(lo=[0.0], hi=[1.0])
    assert np.allclose(dom.clamp(np.array([[-0.5], [0.5], [2.0]])).ravel(),
                       [0.0, 0.5, 1.0])


@settings(max_examples=25, deadline=None)
@given(deg=st.integers(1, 4), seed=st.integers(0, 10_000))
def test_fit_eval_interpolates_nodes_property(deg, seed):
    # [TRIVIAL: invariant] least-squares fit through tensor nodes
    # reproduces any sampled smooth function at the nodes to 1e-8
    rng = np.random.default_rng(seed)
    dom = Domain(lo=[-1.0, 0.0], hi=[1.0, 2.0])
    m = deg + 2
    nodes = cheb_nodes(dom, m)
    coef = rng.normal(size=(deg + 1, deg + 1))
    vals = np.zeros(len(nodes))
    for i in range(deg + 1):
        for j in range(deg + 1):
            if i + j <= deg:
                vals += coef[i, j] * nodes[:, 0] ** i * nodes[:, 1] ** j
    approx = fit_tensor(dom, deg, vals, points_per_dim=m)
    assert np.max(np.abs(approx.eval(nodes) - vals)) < 1e-8 * max(1.0, np.max(np.abs(vals)))


def test_time_varying_domains_contain_sampled_images():
    # [TRIVIAL: invariant] every sampled successor lies inside the next box
    init = Domain(lo=[0.0, 0.0], hi=[1.0, 1.0])

    def sampler(t, dom):
        corners = np.array([[lo, hi] for lo, hi in zip(dom.lo, dom.hi)]).T
        return 1.1 * corners + 0.05 * t

    doms = build_time_varying_domains(init, 5, sampler, margin=0.02)
    assert len(doms) == 6
    for t in range(5):
        pts = sampler(t, doms[t])
        assert np.all(pts >= doms[t + 1].lo - 1e-12)
        assert np.all(pts <= doms[t + 1].hi + 1e-12)


def test_width_cap_rejects_unbounded_growth():
    init = Domain(lo=[0.0], hi=[1.0])

    def explode(t, dom):
        return np.array([[dom.lo[0] * 3 - 10], [dom.hi[0] * 3 + 10]])

    with pytest.raises(Exception):
        build_time_varying_domains(init, 10, explode, width_cap=50.0)
