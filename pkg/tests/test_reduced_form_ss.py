import numpy as np
import pytest

from invdp.errors import InsufficientDataError, SeparationError
from invdp.reduced_form_ss import (PlantedSs, SsRuleParams, fit_naive_upper, fit_order_probit,
                                   fit_probit, fit_ss_rule, fit_upper_heckman,
                                   homogeneity_bands, inverse_mills, probit_loglik,
                                   probit_score, shrink, simulate_ss_agent, ss_data,
                                   thresholds_at, variance_decomposition)


@pytest.fixture(scope="module")
def agent():
    return simulate_ss_agent(PlantedSs(), 5000, seed=0)


def test_probit_score_matches_finite_differences(agent):
    X = agent.probit_design()
    b = np.array([2.0, -3.0, 2.5, 0.1])
    g = probit_score(b, agent.order, X)
    fd = np.empty(4)
    for i in range(4):
        e = np.zeros(4)
        e[i] = 1e-6
        fd[i] = (probit_loglik(b + e, agent.order, X) - probit_loglik(b - e, agent.order, X)) / 2e-6
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-6 * np.abs(g).max())


def test_probit_optimum(agent):
    fit = fit_order_probit(agent)
    assert np.abs(probit_score(fit.coef, agent.order, agent.probit_design())).max() < 1e-6
    assert fit.coef[1] < 0
    assert np.all(np.isfinite(fit.se))


def test_ss_rule_mapping(agent):
    rule = fit_ss_rule(agent)
    assert rule.sigma_us == pytest.approx(-1.0 / rule.lower[1], rel=0, abs=0)
    np.testing.assert_allclose(rule.beta_lower, rule.lower[[0, 2, 3]] * rule.sigma_us, rtol=1e-15)
    assert rule.sigma_us == pytest.approx(0.3, rel=0.2)
    assert rule.upper[1] > 0 and rule.beta_lower[1] > 0
    th = thresholds_at(rule, 0.0, 0.0)
    assert th.ordered
    assert np.exp(th.log_S0) == pytest.approx(np.exp(2.6), rel=0.15)


def test_thresholds_zero_slopes():
    p = SsRuleParams(np.zeros(4), np.zeros(4), 1.0, np.array([1.0, 0, 0]), np.zeros(3),
                     np.array([2.0, 0, 0, 0]), np.zeros(4))
    th = thresholds_at(p, 3.0, -1.0)
    assert (th.log_s0, th.log_S0) == (1.0, 2.0)


def test_separation_named():
    y = np.r_[np.ones(20), np.zeros(20)]
    X = np.column_stack([np.ones(40), np.r_[np.zeros(20), np.ones(20) * 3], np.ones(40) * 0,
                         np.random.default_rng(0).normal(size=40)])
    X[:, 2] = np.random.default_rng(1).normal(size=40)
    with pytest.raises(SeparationError, match="log_k"):
        fit_probit(y, X)


def test_too_few_orders():
    y = np.r_[np.ones(5), np.zeros(100)]
    X = np.column_stack([np.ones(105), np.random.default_rng(0).normal(size=(105, 3))])
    with pytest.raises(InsufficientDataError):
        fit_probit(y, X)


def test_inverse_mills_tails():
    z = np.array([-40.0, 0.0, 40.0])
    lam = inverse_mills(z)
    assert np.all(np.isfinite(lam))
    assert lam[1] == pytest.approx(np.sqrt(2 / np.pi))
    assert lam[0] == pytest.approx(40.0, rel=1e-3)


def test_heckman_and_naive_shapes(agent):
    pr = fit_order_probit(agent)
    up = fit_upper_heckman(agent, pr)
    naive = fit_naive_upper(agent)
    assert up.coef.shape == (4,) and naive.coef.shape == (3,)


def test_ss_data_from_panel(calibrated):
    from invdp.simulator import simulate_panel
    from invdp.model_core import StructuralParams
    demand, markup, price, beh = calibrated
    panel = simulate_panel(StructuralParams(0.0036, 0.0219, 2.9658, 0.0341), demand, markup,
                           price, 3000, seed=2, behaviour=beh)
    rule = fit_ss_rule(ss_data(panel, demand))
    assert rule.lower[1] < 0
    assert rule.upper[1] > 0


# shrinkage and variance decomposition

def test_shrink_trivial_cases():
    g = np.array([1.0, 2.0, 4.0, 7.0])
    np.testing.assert_array_equal(shrink(g, np.zeros(4)), g)
    np.testing.assert_allclose(shrink(g, np.full(4, np.sqrt(g.var()))), g.mean())


def test_shrink_identity_and_mean():
    rng = np.random.default_rng(0)
    g = rng.normal(0, 2.0, 500)
    se = np.full(500, 0.7)
    s = shrink(g, se)
    assert abs(s.var() - (g.var() - np.mean(se ** 2))) < 1e-10
    assert abs(s.mean() - g.mean()) < 1e-12


def test_shrink_errors():
    with pytest.raises(ValueError):
        shrink([1.0, 1.0], [0.1, 0.1])
    with pytest.raises(ValueError):
        shrink([1.0, 2.0], [0.1])


def test_variance_decomposition():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(7, 3))
    between, within = variance_decomposition(a)
    direct_between = np.var([row.mean() for row in a])
    direct_within = np.mean([np.var(row) for row in a])
    assert abs(between - direct_between) < 1e-12 and abs(within - direct_within) < 1e-12
    assert between + within == pytest.approx(a.var(), abs=1e-12)
    assert variance_decomposition(np.repeat(a[:, :1], 3, axis=1))[1] == 0.0
    assert variance_decomposition(np.tile(a[:1], (4, 1)))[0] == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        variance_decomposition(a[:1])
    with pytest.raises(ValueError):
        variance_decomposition(a[:, :1])


def test_homogeneity_bands_grow_with_heterogeneity():
    rng = np.random.default_rng(2)
    se = np.full(200, 0.1)
    shares = []
    for scale in (0.0, 0.2, 0.5):
        g = 1.0 + scale * rng.normal(size=200) + se * rng.normal(size=200)
        shares.append(homogeneity_bands(g, se)[2].mean())
    assert shares[0] <= shares[1] <= shares[2]
    assert shares[0] < 0.05 < shares[2]
