import numpy as np
import pytest

from invdp.dp_solver import DiscreteModel
from invdp.model_core import MarkupClass, StructuralParams
from invdp.simulator import (COST_NAMES, MEDIAN_COSTS, PriceProcess, behaviour_model,
                             calibrated_demand)


def random_model(seed, n_states=3, n_actions=2, n_features=5, scale=1.0):
    """Random row-stochastic transitions and features."""
    rng = np.random.default_rng(seed)
    F = rng.random((n_actions, n_states, n_states)) + 0.05
    F /= F.sum(axis=2, keepdims=True)
    H = scale * rng.normal(size=(n_actions, n_states, n_features))
    return DiscreteModel(F, H)


@pytest.fixture(scope="session")
def median_params():
    return StructuralParams(*[MEDIAN_COSTS[n] for n in COST_NAMES])


@pytest.fixture(scope="session")
def calibrated():
    """Calibrated demand and its behaviour model (built once per session)."""
    demand = calibrated_demand()
    markup = MarkupClass(0.655)
    price = PriceProcess()
    return demand, markup, price, behaviour_model(demand, markup, price, seed=0)


def planted_demand_panel(params, n, seed, prices=(25.28, 22.75)):
    """Uncensored NB2 (or Poisson, alpha = 0) counts at random regressors."""
    from invdp.model_core import Panel

    rng = np.random.default_rng(seed)
    day = np.arange(n)
    price = np.asarray(prices)[rng.integers(0, len(prices), n)]
    trailing = rng.gamma(4.0, 0.6, n)
    weekend = (rng.random(n) < 2 / 7).astype(int)
    holiday = (rng.random(n) < 0.05).astype(int)
    mu = params.mean(price, trailing, weekend, holiday)
    if params.alpha == 0:
        y = rng.poisson(mu)
    else:
        r = 1 / params.alpha
        y = rng.negative_binomial(r, r / (r + mu))
    return Panel(store_id=np.zeros(n), product_id=np.zeros(n), day=day,
                 inventory=np.full(n, 10**6), order=np.zeros(n), demand=y, sales=y,
                 price=price, trailing7=trailing, weekend=weekend, holiday=holiday)


# --------------------------------------------------------------------------
# acceptance report: one line per criterion, printed after the test summary

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    """``acceptance(n, title, passed, detail)`` records the outcome of criterion ``n``."""
    def record(n, title, passed, detail=""):
        _ACCEPTANCE[n] = (title, bool(passed), detail)
        print(f"criterion {n} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, passed, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n} {'PASS' if passed else 'FAIL'} "
                                    f"- {title}: {detail}")
