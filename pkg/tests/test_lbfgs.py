import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, strategies as st

from porepinn.lbfgs import LBFGSOptions, LineSearchFailure, lbfgs_minimize, strong_wolfe
from porepinn.net import TrainingDivergence


def quadratic(target, scale=None):
    scale = np.ones_like(target) if scale is None else scale

    def f(x):
        r = x - target
        return float(np.sum(scale * r * r)), 2 * scale * r
    return f


def rosenbrock(x):
    return float(scipy.optimize.rosen(x)), scipy.optimize.rosen_der(x)


def test_isotropic_quadratic_exact():
    target = np.arange(1.0, 6.0)
    res = lbfgs_minimize(quadratic(target), np.zeros(5), LBFGSOptions(tolerance=0.0, grad_tolerance=1e-12))
    assert res.converged
    assert np.abs(res.theta - target).max() < 1e-10
    assert res.iterations <= target.size + 5


def test_ill_conditioned_quadratic():
    target = np.linspace(-1, 1, 6)
    scale = np.logspace(0, 3, 6)
    res = lbfgs_minimize(quadratic(target, scale), np.zeros(6), LBFGSOptions(tolerance=0.0, grad_tolerance=1e-10))
    assert np.abs(res.theta - target).max() < 1e-10


def test_rosenbrock_from_standard_start():
    res = lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]), LBFGSOptions(tolerance=0.0, grad_tolerance=1e-12))
    assert np.abs(res.theta - 1.0).max() < 1e-6
    # independent optimizer lands on the same minimizer
    ref = scipy.optimize.minimize(scipy.optimize.rosen, [-1.2, 1.0], jac=scipy.optimize.rosen_der,
                                  method="L-BFGS-B", options={"gtol": 1e-12, "ftol": 1e-15})
    assert np.abs(res.theta - ref.x).max() < 1e-5


def test_memory_zero_still_decreases():
    f = quadratic(np.array([1.0, -2.0, 3.0]), np.array([1.0, 10.0, 100.0]))
    x0 = np.zeros(3)
    res = lbfgs_minimize(f, x0, LBFGSOptions(memory=0, max_iters=30, tolerance=0.0))
    assert res.loss < f(x0)[0]
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


def test_zero_iterations_returns_start():
    x0 = np.array([3.0, 4.0])
    res = lbfgs_minimize(quadratic(np.zeros(2)), x0, LBFGSOptions(max_iters=0))
    assert not res.converged and res.iterations == 0
    assert np.array_equal(res.theta, x0)


def test_stops_on_loss_tolerance():
    res = lbfgs_minimize(quadratic(np.ones(3)), np.zeros(3), LBFGSOptions(tolerance=1e-3))
    assert res.converged and res.reason == "loss below tolerance" and res.loss < 1e-3


def test_nan_objective_raises_divergence():
    def f(x):
        return (float("nan"), np.zeros_like(x)) if x[0] > 0.5 else (float((x[0] - 2) ** 2), np.array([2 * (x[0] - 2)]))
    with pytest.raises(TrainingDivergence):
        lbfgs_minimize(f, np.array([0.0]), LBFGSOptions(max_iters=50))


def test_line_search_failure_is_reported_not_raised():
    # gradient points the wrong way: no step decreases the objective
    def f(x):
        return float(x @ x), -2 * x
    res = lbfgs_minimize(f, np.array([1.0, 1.0]), LBFGSOptions(max_iters=10))
    assert not res.converged and res.reason.startswith("line search failed")


def test_strong_wolfe_on_parabola():
    # phi(a) = (a - 2)^2 has its minimum at a = 2
    def phi(a):
        return (a - 2) ** 2, 2 * (a - 2), np.array([2 * (a - 2)])
    a, f, _, g, _ = strong_wolfe(phi, 4.0, -4.0, 1.0)
    assert f <= 4.0 + 1e-4 * a * -4.0
    assert abs(g) <= 0.9 * 4.0
    with pytest.raises(LineSearchFailure):
        strong_wolfe(phi, 4.0, 1.0, 1.0)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.integers(0, 5))
def test_best_so_far_monotone_property(target, memory):
    target = np.array(target)
    res = lbfgs_minimize(quadratic(target, np.linspace(1, 5, target.size)), np.zeros(target.size),
                         LBFGSOptions(memory=memory, max_iters=25, tolerance=0.0))
    h = res.history
    assert all(b <= a for a, b in zip(h, h[1:]))
    assert res.loss == pytest.approx(min(h) if h else res.loss)
