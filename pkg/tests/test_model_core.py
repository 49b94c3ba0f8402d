import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from invdp.errors import DomainError
from invdp.model_core import (DAILY_BETA, DemandParams, MarkupClass, Panel, StructuralParams,
                              demand_regressors, expected_min_and_stockout, flow_profit,
                              lerner_index, negbin_logpmf, negbin_pmf, negbin_pmf_vector,
                              profit_features)


def test_structural_params_validation():
    StructuralParams(0.0, -1.0, 0.0, 0.0)
    for bad in (dict(gamma_h=-1e-9), dict(gamma_f=-1), dict(gamma_c=-1)):
        kw = dict(gamma_h=0.0, gamma_z=0.0, gamma_f=0.0, gamma_c=0.0) | bad
        with pytest.raises(DomainError):
            StructuralParams(**kw)
    with pytest.raises(DomainError):
        StructuralParams(0, 0, 0, 0, sigma_eps=0.0)
    with pytest.raises(DomainError):
        StructuralParams(0, 0, 0, 0, beta=1.0)
    with pytest.raises(DomainError):
        StructuralParams(0, float("nan"), 0, 0)


def test_theta_round_trip():
    p = StructuralParams(0.01, -0.2, 3.0, 0.05, sigma_eps=2.0)
    np.testing.assert_allclose(p.theta(), [0.5, 0.005, -0.1, 1.5, 0.025])
    q = StructuralParams.from_theta(p.theta())
    np.testing.assert_allclose(q.costs, p.costs)
    assert q.sigma_eps == pytest.approx(2.0)
    assert p.replace(gamma_f=1.0).gamma_f == 1.0
    assert DAILY_BETA == pytest.approx(0.95 ** (1 / 365))


def test_lerner():
    assert lerner_index(0.655) == pytest.approx(0.655 / 1.655)
    assert MarkupClass(1.0).lerner == pytest.approx(0.5)
    with pytest.raises(DomainError):
        lerner_index(-0.1)


def test_negbin_matches_scipy():
    d = np.arange(60)
    for d_e, alpha in ((2.5, 0.33), (10.0, 1.2), (0.3, 0.05)):
        r = 1 / alpha
        ref = stats.nbinom.pmf(d, r, r / (r + d_e))
        np.testing.assert_allclose(negbin_pmf(d, d_e, alpha), ref, rtol=1e-10, atol=1e-300)


def test_negbin_poisson_limit():
    d = np.arange(40)
    np.testing.assert_allclose(negbin_pmf(d, 4.0, 0.0), stats.poisson.pmf(d, 4.0), rtol=1e-12)
    np.testing.assert_allclose(negbin_pmf(d, 4.0, 1e-9), stats.poisson.pmf(d, 4.0), rtol=1e-6)


def test_negbin_errors():
    with pytest.raises(DomainError):
        negbin_logpmf(1, 0.0, 0.1)
    with pytest.raises(DomainError):
        negbin_logpmf(1, 1.0, -0.1)
    with pytest.raises(DomainError):
        negbin_logpmf(-1, 1.0, 0.1)
    with pytest.raises(DomainError):
        negbin_logpmf(1.5, 1.0, 0.1)


def test_pmf_vector_tail():
    pmf = negbin_pmf_vector(3.0, 0.5)
    assert 1 - pmf.sum() < 1e-12
    assert pmf.sum() <= 1 + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 30.0), st.floats(0.0, 3.0))
def test_min_and_stockout_monotone(d_e, alpha):
    k = np.arange(0, 101, 2)
    sales, stock = expected_min_and_stockout(k, d_e, alpha)
    assert np.all(np.diff(sales) >= -1e-12)
    assert np.all(np.diff(stock) <= 1e-12)
    assert np.all(sales <= np.minimum(k, d_e) + 1e-9)
    s0, z0 = expected_min_and_stockout(0, d_e, alpha)
    assert s0 == 0.0
    assert z0 == pytest.approx(1.0 - negbin_pmf(0, d_e, alpha), abs=1e-12)


def test_min_and_stockout_bruteforce():
    d_e, alpha = 4.0, 0.4
    d = np.arange(400)
    pmf = negbin_pmf(d, d_e, alpha)
    for k in (0, 1, 5, 17):
        s, z = expected_min_and_stockout(k, d_e, alpha)
        assert s == pytest.approx(float(np.minimum(d, k) @ pmf), abs=1e-10)
        assert z == pytest.approx(float(pmf[d > k].sum()), abs=1e-10)


def test_profit_features_and_flow():
    h = profit_features(6, 10, 25.0, 3.0, 0.3, 0.4)
    s, z = expected_min_and_stockout(10, 3.0, 0.3)
    np.testing.assert_allclose(h, [0.4 * 25.0 * s, -10, z, -1, -6])
    par = StructuralParams(0.01, 0.5, 2.0, 0.03)
    expect = 0.4 * 25 * s - 0.01 * 10 + 0.5 * z - 2.0 - 0.03 * 6
    assert flow_profit(6, 10, 25.0, 3.0, 0.3, 0.4, par) == pytest.approx(expect)
    assert profit_features(0, 10, 25.0, 3.0, 0.3, 0.4)[3] == 0.0


def test_demand_params():
    d = DemandParams(eta0=(0.3, 0.5, -1.0), eta_p=-0.6, eta_Q=0.5, alpha=0.3)
    X = demand_regressors(np.array([20.0]), np.array([14.0]), [1], [0])
    assert d.mean(20.0, 14.0, 1, 0) == pytest.approx(math.exp(X[0] @ d.coef))
    with pytest.raises(DomainError):
        DemandParams(alpha=-1)
    with pytest.raises(DomainError):
        DemandParams(eta0=(0, 0))


def _panel(n=5):
    return Panel(store_id=np.zeros(n), product_id=np.ones(n), day=np.arange(n),
                 inventory=np.arange(n) + 3, order=np.zeros(n), demand=[2, -1, 1, 0, 5][:n],
                 sales=np.ones(n), price=np.full(n, 9.5), trailing7=np.full(n, 7.0),
                 weekend=np.zeros(n), holiday=np.zeros(n))


def test_panel_roundtrip():
    p = _panel()
    assert len(p) == 5 and p.inventory.dtype == np.int64 and p.price.dtype == np.float64
    rows = list(p.rows())
    assert rows[1].demand is None and rows[0].demand == 2
    q = Panel.from_rows(rows)
    for c in ("demand", "inventory", "price", "day"):
        np.testing.assert_array_equal(getattr(q, c), getattr(p, c))
    both = Panel.concat([p, p.select(p.day < 2)])
    assert len(both) == 7
    with pytest.raises(DomainError):
        Panel(**{**p.__dict__, "day": np.arange(3)})
