import numpy as np
import pytest

from conftest import planted_demand_panel
from invdp.demand_estimation import (ALPHA_FLOOR, fit_negbin, forecast, loglik,
                                     loglik_gradient, loglik_value)
from invdp.errors import InsufficientDataError, SingularInformationError
from invdp.model_core import DemandParams, demand_regressors

PLANTED = DemandParams(eta0=(0.3, 0.5, 1.2), eta_p=-0.6, eta_Q=0.5, alpha=0.33)


def _design(panel):
    return demand_regressors(panel.price, panel.trailing7, panel.weekend, panel.holiday)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    panel = planted_demand_panel(PLANTED, 400, seed)
    X, y = _design(panel), panel.sales
    rng = np.random.default_rng(seed)
    w = np.append(PLANTED.coef + rng.normal(0, 0.05, 5), np.log(0.3))
    g = loglik_gradient(w, X, y)
    fd = np.empty_like(w)
    for i in range(w.size):
        h = 1e-6 * max(1.0, abs(w[i]))
        e = np.zeros_like(w)
        e[i] = h
        fd[i] = (loglik_value(w + e, X, y) - loglik_value(w - e, X, y)) / (2 * h)
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-6 * max(1.0, np.abs(g).max()))


def test_gradient_small_alpha_is_stable():
    panel = planted_demand_panel(PLANTED, 300, 1)
    X, y = _design(panel), panel.sales
    w = np.append(PLANTED.coef, np.log(1e-9))
    assert np.all(np.isfinite(loglik_gradient(w, X, y)))


def test_loglik_matches_scipy():
    from scipy import stats
    panel = planted_demand_panel(PLANTED, 200, 2)
    X, y = _design(panel), panel.sales
    mu = np.exp(X @ PLANTED.coef)
    r = 1 / PLANTED.alpha
    ref = stats.nbinom.logpmf(y, r, r / (r + mu)).sum()
    assert loglik(PLANTED, X, y) == pytest.approx(ref, rel=1e-9)


def test_poisson_limit_recovery():
    planted = DemandParams(eta0=(0.3, 0.5, 1.2), eta_p=-0.6, eta_Q=0.5, alpha=0.0)
    fit = fit_negbin(planted_demand_panel(planted, 20000, 3))
    assert fit.params.alpha < 0.01
    assert fit.params.alpha >= ALPHA_FLOOR
    np.testing.assert_allclose(fit.params.coef[[0, 1, 3, 4]], planted.coef[[0, 1, 3, 4]],
                               atol=0.08)


def test_planted_recovery():
    fit = fit_negbin(planted_demand_panel(PLANTED, 20000, 4))
    ci = fit.conf_int()
    truth = np.append(PLANTED.coef, PLANTED.alpha)
    assert np.all(np.abs(fit.estimates - truth) < 5 * fit.se)
    assert fit.grad_norm < 1e-4 * fit.n_obs
    assert fit.pseudo_r2 > 0
    assert ci.shape == (6, 2)


def test_censored_days_are_dropped():
    panel = planted_demand_panel(PLANTED, 600, 5)
    panel.inventory[:300] = 0
    assert fit_negbin(panel).n_obs == 300


def test_too_few_rows():
    with pytest.raises(InsufficientDataError):
        fit_negbin(planted_demand_panel(PLANTED, 20, 6))


def test_constant_regressor_is_named():
    panel = planted_demand_panel(PLANTED, 500, 7)
    panel.weekend[:] = 0
    with pytest.raises(SingularInformationError, match="weekend"):
        fit_negbin(panel)


def test_forecast_variance():
    d, v = forecast(PLANTED, 25.0, 10.0, 1, 0)
    assert v == pytest.approx(d * (1 + 0.33 * d))


def test_calibrated_pseudo_r2_band(calibrated, median_params):
    from invdp.simulator import simulate_panel
    demand, markup, price, beh = calibrated
    panel = simulate_panel(median_params, demand, markup, price, 5000, seed=0, behaviour=beh)
    fit = fit_negbin(panel)
    assert 0.02 <= fit.pseudo_r2 <= 0.15
    assert fit.params.eta_p < 0 and fit.params.eta_Q > 0
