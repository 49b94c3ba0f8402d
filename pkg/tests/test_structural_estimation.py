import numpy as np
import pytest

from conftest import random_model
from invdp.dp_solver import ccp_from_values, solve_bellman
from invdp.errors import InsufficientDataError
from invdp.simulator import simulate_panel, simulate_states
from invdp.structural_estimation import (PmlProblem, estimation_model, fit_panel,
                                         frequency_ccp, kernel_ccp, kernel_weight,
                                         pseudo_loglik, state_coordinates, two_step_pml)

THETA = np.array([1.0, 0.5, -0.3, 0.8, 0.2])
BETA = 0.9


@pytest.fixture(scope="module")
def toy():
    m = random_model(21, n_states=10, n_actions=4)
    P = ccp_from_values(m, (THETA, BETA), solve_bellman(m, (THETA, BETA)))
    states, actions = simulate_states(m, P, 100_000, seed=3)
    return m, P, states, actions


def test_true_ccp_is_psi_fixed_point(toy):
    m, P, states, actions = toy
    prob = PmlProblem(m, P, states, actions, BETA)
    np.testing.assert_allclose(prob.ccp(THETA), P.probs, atol=1e-10)


def test_pml_gradient_and_hessian(toy):
    m, P, states, actions = toy
    prob = PmlProblem(m, P, states, actions, BETA)
    t = THETA + 0.1
    g = prob.gradient(t)
    H = prob.hessian(t)
    fd = np.empty(5)
    fdH = np.empty((5, 5))
    for i in range(5):
        e = np.zeros(5)
        e[i] = 1e-6
        fd[i] = (prob.loglik(t + e) - prob.loglik(t - e)) / 2e-6
        fdH[:, i] = (prob.gradient(t + e) - prob.gradient(t - e)) / 2e-6
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-4)
    np.testing.assert_allclose(H, fdH, rtol=1e-5, atol=1e-3)
    assert pseudo_loglik(t, P, m, states, actions, BETA) == pytest.approx(prob.loglik(t))


def test_recovery_at_true_ccp(toy):
    m, P, states, actions = toy
    fit = two_step_pml(m, P, states, actions, BETA)
    assert np.all(np.abs(fit.theta - THETA) < 4 * fit.theta_se)
    np.testing.assert_allclose(fit.costs, THETA[1:] / THETA[0], atol=0.15)
    assert fit.diagnostics["at_bound"] == []
    assert fit.sigma_eps == pytest.approx(1.0, rel=0.1)


def test_recovery_at_frequency_ccp(toy):
    m, P, states, actions = toy
    F = frequency_ccp(states, actions, m.n_states, m.n_actions)
    F = np.maximum(np.nan_to_num(F, nan=1.0 / m.n_actions), 1e-6)
    F /= F.sum(axis=1, keepdims=True)
    fit = two_step_pml(m, F, states, actions, BETA)
    np.testing.assert_allclose(fit.theta, THETA, atol=0.2)


def test_no_choice_variation(toy):
    m, P, states, _ = toy
    with pytest.raises(InsufficientDataError):
        two_step_pml(m, P, states, np.zeros_like(states), BETA)


def test_kernel_ccp():
    assert kernel_weight(0.0, 100) == 1.0
    assert kernel_weight(1.0, 100) == pytest.approx(1 / 11)
    coords = np.arange(5.0)
    P = kernel_ccp([2, 2, 2, 2], [0, 1, 1, 1], coords, 2)
    np.testing.assert_allclose(P.probs, np.tile([0.25, 0.75], (5, 1)))
    P = kernel_ccp([0, 0, 4, 4], [0, 0, 1, 1], coords, 2, floor=1e-3)
    assert np.all(P.probs >= 1e-3 * 0.999)
    np.testing.assert_allclose(P.probs.sum(axis=1), 1.0)
    assert P.probs[0, 0] > 0.5 > P.probs[4, 0]
    with pytest.raises(InsufficientDataError):
        kernel_ccp([], [], coords, 2)


def test_fit_calibrated_panel(calibrated, median_params):
    demand, markup, price, beh = calibrated
    panel = simulate_panel(median_params, demand, markup, price, 3000, seed=4, behaviour=beh)
    m = estimation_model(panel, demand, markup.lerner)
    assert state_coordinates(m).shape == (m.n_states, 5)
    fit = fit_panel(panel, m)
    assert fit.grad_norm <= 1e-4
    assert fit.costs.shape == (4,) and np.all(np.isfinite(fit.costs_se))
    assert fit.costs[2] > 0  # fixed ordering cost
