"""Box-constrained optimizer wrappers: scalar and batched."""

import numpy as np
import pytest

from iamkit.optimize import (
    SolverError,
    maximize_batch,
    minimize_box,
    projected_gradient_norm,
)


def _quad(center):
    def fun_grad(x):
        d = x - center
        return float(d @ d), 2.0 * d

    return fun_grad


def test_minimize_box_interior_minimum():
    # [DERIVED: analytic optimum] unconstrained quadratic center inside box
    c = np.array([0.3, -0.2, 0.7])
    x, f, _ = minimize_box(_quad(c), np.zeros(3), -np.ones(3), np.ones(3))
    assert np.allclose(x, c, atol=1e-7)
    assert f == pytest.approx(0.0, abs=1e-12)


def test_minimize_box_active_bound():
    # [DERIVED: analytic optimum] center outside box -> clipped coordinate
    c = np.array([2.0, 0.1])
    x, _, _ = minimize_box(_quad(c), np.zeros(2), -np.ones(2), np.ones(2))
    assert x[0] == pytest.approx(1.0, abs=1e-9)
    assert x[1] == pytest.approx(0.1, abs=1e-7)


def test_projected_gradient_norm_at_bound():
    # [TRIVIAL] gradient pushing outward at an active bound does not count
    x = np.array([1.0])
    g = np.array([-3.0])  # descent direction points out of the box
    assert projected_gradient_norm(x, g, np.array([-1.0]), np.array([1.0])) == 0.0


def test_solver_error_carries_best_iterate():
    def rosenbrock(x):
        f = 100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2
        g = np.array([
            -400.0 * x[0] * (x[1] - x[0] ** 2) - 2.0 * (1.0 - x[0]),
            200.0 * (x[1] - x[0] ** 2),
        ])
        return float(f), g

    # one iteration from a distant start cannot reach the tolerance
    with pytest.raises(SolverError) as exc:
        minimize_box(rosenbrock, np.array([-1.5, 2.0]), np.full(2, -5.0),
                     np.full(2, 5.0), tol=1e-12, max_iter=1)
    assert exc.value.best_x is not None and exc.value.best_x.shape == (2,)


def test_maximize_batch_independent_problems():
    # [DERIVED: analytic optimum] concave quadratics with distinct centers
    centers = np.array([[0.2, 0.4], [0.8, 0.1], [0.5, 0.9]])

    def fun_grad(Z, idx):
        sel = slice(None) if idx is None else idx
        d = Z - centers[sel]
        return -np.sum(d * d, axis=1), -2.0 * d

    Z0 = np.full((3, 2), 0.5)
    lower = np.zeros(2)
    upper = np.ones(2)
    Z, f, pg = maximize_batch(fun_grad, Z0, lower, upper, tol=1e-9)
    assert np.allclose(Z, centers, atol=1e-6)
    assert np.all(f > -1e-10)
    assert np.all(pg <= 1e-9)


def test_maximize_batch_clips_to_bounds():
    centers = np.array([[1.4, 0.5]])

    def fun_grad(Z, idx):
        sel = slice(None) if idx is None else idx
        d = Z - centers[sel]
        return -np.sum(d * d, axis=1), -2.0 * d

    Z, _, _ = maximize_batch(fun_grad, np.array([[0.5, 0.5]]), np.zeros(2), np.ones(2))
    assert Z[0, 0] == pytest.approx(1.0, abs=1e-9)
    assert Z[0, 1] == pytest.approx(0.5, abs=1e-6)
