"""Domain types, demand primitives and the per-period profit features.

Demand follows a Negative Binomial law with mean ``d_e`` and variance
``d_e * (1 + alpha * d_e)`` (the NB2 form); ``alpha = 0`` is the Poisson
limit. Every expectation over demand uses the truncated support returned by
:func:`negbin_pmf_vector`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .errors import DomainError

DAILY_BETA = 0.95 ** (1.0 / 365.0)
EULER = 0.5772156649
N_FEATURES = 5
FEATURE_NAMES = ("revenue", "holding", "stockout", "fixed", "unit")
PMF_TAIL = 1e-12


@dataclass(frozen=True)
class StructuralParams:
    """Perceived inventory costs of one store-product, in currency units.

    ``gamma_z`` multiplies the stockout indicator with a positive sign in the
    flow profit, so a negative value acts as an extra penalty on stockouts.
    """

    gamma_h: float
    gamma_z: float
    gamma_f: float
    gamma_c: float
    sigma_eps: float = 1.0
    beta: float = DAILY_BETA

    def __post_init__(self):
        for name in ("gamma_h", "gamma_f", "gamma_c"):
            if not getattr(self, name) >= 0.0:
                raise DomainError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not math.isfinite(self.gamma_z):
            raise DomainError("gamma_z must be finite")
        if not self.sigma_eps > 0.0:
            raise DomainError(f"sigma_eps must be > 0, got {self.sigma_eps}")
        if not 0.0 < self.beta < 1.0:
            raise DomainError(f"beta must lie in (0, 1), got {self.beta}")

    @property
    def costs(self) -> np.ndarray:
        return np.array([self.gamma_h, self.gamma_z, self.gamma_f, self.gamma_c])

    def theta(self) -> np.ndarray:
        """Return ``(1, gh, gz, gf, gc) / sigma_eps``, the payoff weights."""
        return np.concatenate(([1.0], self.costs)) / self.sigma_eps

    def dollar_weights(self) -> np.ndarray:
        """Payoff weights in currency, excluding the shock scale."""
        return np.concatenate(([1.0], self.costs))

    @classmethod
    def from_theta(cls, theta, beta: float = DAILY_BETA) -> "StructuralParams":
        theta = np.asarray(theta, dtype=float)
        if theta[0] <= 0:
            raise DomainError("first payoff weight (1/sigma) must be positive")
        c = theta[1:] / theta[0]
        return cls(float(c[0]), float(c[1]), float(c[2]), float(c[3]),
                   sigma_eps=1.0 / float(theta[0]), beta=beta)

    def replace(self, **changes) -> "StructuralParams":
        vals = dict(gamma_h=self.gamma_h, gamma_z=self.gamma_z, gamma_f=self.gamma_f,
                    gamma_c=self.gamma_c, sigma_eps=self.sigma_eps, beta=self.beta)
        vals.update(changes)
        return StructuralParams(**vals)


@dataclass(frozen=True)
class DemandParams:
    """Coefficients of the log-linear sales forecast.

    ``eta0`` holds the (weekend, holiday, intercept) coefficients; the price
    and trailing-sales terms enter as ``ln p`` and ``ln(Q7 + 1)``.
    """

    eta0: tuple = (0.0, 0.0, 0.0)
    eta_p: float = 0.0
    eta_Q: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        eta0 = tuple(float(v) for v in self.eta0)
        if len(eta0) != 3:
            raise DomainError("eta0 must hold (weekend, holiday, intercept)")
        object.__setattr__(self, "eta0", eta0)
        vals = eta0 + (self.eta_p, self.eta_Q, self.alpha)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("demand coefficients must be finite")
        if self.alpha < 0:
            raise DomainError(f"alpha must be >= 0, got {self.alpha}")

    @property
    def coef(self) -> np.ndarray:
        """Coefficients aligned with :func:`demand_regressors` columns."""
        return np.array([*self.eta0, self.eta_p, self.eta_Q])

    def log_mean(self, price, trailing, weekend=0, holiday=0):
        price = np.asarray(price, dtype=float)
        return (self.eta0[0] * np.asarray(weekend, dtype=float)
                + self.eta0[1] * np.asarray(holiday, dtype=float)
                + self.eta0[2] + self.eta_p * np.log(price)
                + self.eta_Q * np.log1p(np.asarray(trailing, dtype=float)))

    def mean(self, price, trailing, weekend=0, holiday=0):
        return np.exp(self.log_mean(price, trailing, weekend, holiday))


def demand_regressors(price, trailing, weekend, holiday) -> np.ndarray:
    """Design matrix ``[weekend, holiday, 1, ln p, ln(Q7 + 1)]``."""
    price = np.asarray(price, dtype=float)
    n = price.shape[0]
    return np.column_stack([
        np.asarray(weekend, dtype=float), np.asarray(holiday, dtype=float),
        np.ones(n), np.log(price), np.log1p(np.asarray(trailing, dtype=float)),
    ])


@dataclass(frozen=True)
class PanelRow:
    store_id: int
    product_id: int
    day_index: int
    inventory: int
    order: int
    sales: int
    price: float
    trailing7: float
    weekend: int
    holiday: int
    demand: Optional[int] = None


@dataclass(frozen=True)
class MarkupClass:
    markup: float
    lerner: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "lerner", lerner_index(self.markup))


def lerner_index(markup: float) -> float:
    """Price-cost margin as a share of price under a constant markup."""
    if not markup >= 0:
        raise DomainError(f"markup must be >= 0, got {markup}")
    return markup / (1.0 + markup)


def _check_alpha(alpha):
    if not alpha >= 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")


def _scaled_log1p(alpha: float, d_e):
    """``log1p(alpha * d_e) / alpha`` with the ``alpha -> 0`` limit ``d_e``."""
    if alpha == 0.0:
        return np.asarray(d_e, dtype=float)
    return np.log1p(alpha * np.asarray(d_e, dtype=float)) / alpha


def negbin_logpmf(d, d_e: float, alpha: float):
    """Log-probability of ``d`` units of demand."""
    if not d_e > 0:
        raise DomainError(f"expected demand must be > 0, got {d_e}")
    _check_alpha(alpha)
    d = np.asarray(d)
    if np.any(d < 0) or np.any(d != np.floor(d)):
        raise DomainError("demand must be a non-negative integer")
    d_int = d.astype(np.int64)
    top = int(d_int.max()) if d_int.size else 0
    # sum_{j<d} log1p(alpha j), tabulated once
    steps = np.log1p(alpha * np.arange(top, dtype=float))
    cum = np.concatenate(([0.0], np.cumsum(steps)))
    out = (cum[d_int] + d_int * math.log(d_e)
           - d_int * math.log1p(alpha * d_e) - float(_scaled_log1p(alpha, d_e))
           - gammaln(d_int + 1.0))
    return out


def negbin_pmf(d, d_e: float, alpha: float):
    """NB2 probability mass at ``d`` (scalar or array)."""
    out = np.exp(negbin_logpmf(d, d_e, alpha))
    return float(out) if np.ndim(out) == 0 else out


def pmf_support_cap(d_e: float) -> int:
    return int(10 * (d_e + 10))


def negbin_pmf_vector(d_e: float, alpha: float) -> np.ndarray:
    """Probabilities on ``0..D`` where ``D`` is the first point whose CDF
    reaches ``1 - 1e-12``, capped at ``10 (d_e + 10)``."""
    if not d_e > 0:
        raise DomainError(f"expected demand must be > 0, got {d_e}")
    _check_alpha(alpha)
    cap = pmf_support_cap(d_e)
    pmf = negbin_pmf(np.arange(cap + 1), d_e, alpha)
    cdf = np.cumsum(pmf)
    hit = np.nonzero(cdf >= 1.0 - PMF_TAIL)[0]
    top = int(hit[0]) if hit.size else cap
    return pmf[: top + 1]


def expected_min_and_stockout(k, d_e: float, alpha: float):
    """Expected sales ``E[min(d, k)]`` and stockout probability ``P(d > k)``.

    ``k`` may be a scalar or an integer array; the result has matching shape.
    """
    k_arr = np.asarray(k)
    if np.any(k_arr < 0):
        raise DomainError("inventory must be >= 0")
    pmf = negbin_pmf_vector(d_e, alpha)
    return _min_and_stockout_from_pmf(k_arr, pmf) if k_arr.ndim else tuple(
        float(v[0]) for v in _min_and_stockout_from_pmf(k_arr.reshape(1), pmf))


def _min_and_stockout_from_pmf(k, pmf):
    k = np.asarray(k, dtype=np.int64)
    tail = max(0.0, 1.0 - pmf.sum())
    # survival[j] = P(d > j) on the truncated support, plus the lost tail
    surv = np.concatenate((np.cumsum(pmf[::-1])[::-1][1:], [0.0])) + tail
    # E[min(d,k)] = sum_{j<k} P(d > j)
    cum_surv = np.concatenate(([0.0], np.cumsum(surv)))
    kk = np.minimum(k, pmf.size)
    sales = cum_surv[kk] + np.maximum(k - pmf.size, 0) * tail
    stock = np.where(k < pmf.size, surv[np.minimum(k, pmf.size - 1)], tail)
    return sales, stock


def min_and_stockout_table(k_values, pmf):
    """Vectorised ``(E[min(d,k)], P(d>k))`` for many ``k`` and one pmf."""
    return _min_and_stockout_from_pmf(np.asarray(k_values), pmf)


def profit_features(y, k, p, d_e, alpha, lerner) -> np.ndarray:
    """Row of payoff features whose inner product with
    ``(1, gh, gz, gf, gc) / sigma_eps`` is the expected flow profit over
    ``sigma_eps``."""
    sales, stock = expected_min_and_stockout(k, d_e, alpha)
    return np.array([lerner * p * sales, -float(k), stock,
                     -float(y > 0), -float(y)])


def flow_profit(y, k, p, d_e, alpha, lerner, params: StructuralParams) -> float:
    """Expected flow profit in currency, net of the ordering-cost shock."""
    return float(profit_features(y, k, p, d_e, alpha, lerner) @ params.dollar_weights())


PANEL_COLUMNS = ("store_id", "product_id", "day", "inventory", "order", "demand",
                 "sales", "price", "trailing7", "weekend", "holiday")
_INT_COLUMNS = {"store_id", "product_id", "day", "inventory", "order", "demand",
                "sales", "weekend", "holiday"}


@dataclass
class Panel:
    """Columnar store-product-day panel; rows are :class:`PanelRow` records.

    ``demand`` is ``-1`` where it is not observed.
    """

    store_id: np.ndarray
    product_id: np.ndarray
    day: np.ndarray
    inventory: np.ndarray
    order: np.ndarray
    demand: np.ndarray
    sales: np.ndarray
    price: np.ndarray
    trailing7: np.ndarray
    weekend: np.ndarray
    holiday: np.ndarray

    def __post_init__(self):
        for name in PANEL_COLUMNS:
            dtype = np.int64 if name in _INT_COLUMNS else np.float64
            setattr(self, name, np.asarray(getattr(self, name), dtype=dtype))
        n = {len(getattr(self, c)) for c in PANEL_COLUMNS}
        if len(n) != 1:
            raise DomainError("panel columns must have equal length")

    def __len__(self):
        return len(self.day)

    def select(self, mask) -> "Panel":
        return Panel(**{c: getattr(self, c)[mask] for c in PANEL_COLUMNS})

    @classmethod
    def concat(cls, panels) -> "Panel":
        panels = list(panels)
        return cls(**{c: np.concatenate([getattr(p, c) for p in panels])
                      for c in PANEL_COLUMNS})

    @classmethod
    def from_rows(cls, rows) -> "Panel":
        rows = list(rows)
        cols = {c: [] for c in PANEL_COLUMNS}
        for r in rows:
            cols["store_id"].append(r.store_id)
            cols["product_id"].append(r.product_id)
            cols["day"].append(r.day_index)
            cols["inventory"].append(r.inventory)
            cols["order"].append(r.order)
            cols["demand"].append(-1 if r.demand is None else r.demand)
            cols["sales"].append(r.sales)
            cols["price"].append(r.price)
            cols["trailing7"].append(r.trailing7)
            cols["weekend"].append(r.weekend)
            cols["holiday"].append(r.holiday)
        return cls(**cols)

    def rows(self):
        for i in range(len(self)):
            d = int(self.demand[i])
            yield PanelRow(int(self.store_id[i]), int(self.product_id[i]), int(self.day[i]),
                           int(self.inventory[i]), int(self.order[i]), int(self.sales[i]),
                           float(self.price[i]), float(self.trailing7[i]),
                           int(self.weekend[i]), int(self.holiday[i]),
                           None if d < 0 else d)
