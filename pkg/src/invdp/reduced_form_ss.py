"""Reduced-form (S, s) rules: order Probit, Heckman upper threshold, shrinkage.

The lower threshold is identified from the Probit of the order indicator on
``(1, ln(k+1), ln d_e, ln p)``: ordering happens when
``ln(k+1) <= ln s_t = x'beta_s + u_s`` so the coefficient on ``ln(k+1)`` is
``-1/sigma_us`` and ``beta_s = b * sigma_us``. The upper threshold is the
post-order stock ``ln(k+y)`` on order days, corrected for selection with the
inverse Mills ratio of the Probit index.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .errors import (ConvergenceError, InsufficientDataError, SeparationError,
                     SingularInformationError)
from .model_core import DemandParams, Panel

PROBIT_NAMES = ("const", "log_k", "log_de", "log_p")
MIN_ORDERS = 10


@dataclass(frozen=True)
class ProbitFit:
    coef: np.ndarray
    se: np.ndarray
    cov: np.ndarray
    loglik: float
    n_obs: int
    iterations: int

    def index(self, X):
        return np.asarray(X) @ self.coef


@dataclass(frozen=True)
class SsRuleParams:
    """Fitted (S, s) rule of one store-product.

    ``lower`` holds the Probit coefficients ``(b0, bk, bd, bp)``;
    ``beta_lower`` the threshold coefficients ``(b0, bd, bp) * sigma_us``;
    ``upper`` the Heckman outcome coefficients ``(b0, bd, bp, mills)``.
    """

    lower: np.ndarray
    lower_se: np.ndarray
    sigma_us: float
    beta_lower: np.ndarray
    beta_lower_se: np.ndarray
    upper: np.ndarray
    upper_se: np.ndarray


@dataclass(frozen=True)
class Thresholds:
    log_s0: float
    log_S0: float

    @property
    def ordered(self) -> bool:
        """Diagnostic: ``S0 >= s0``."""
        return self.log_S0 >= self.log_s0


# --------------------------------------------------------------------------
# Probit

def probit_loglik(b, y, X) -> float:
    z = X @ b
    return float(np.sum(np.where(y == 1, stats.norm.logcdf(z), stats.norm.logcdf(-z))))


def probit_score(b, y, X) -> np.ndarray:
    z = X @ b
    q = 2.0 * y - 1.0
    # generalized residual q phi(qz) / Phi(qz), in log space for tails
    lam = q * np.exp(stats.norm.logpdf(q * z) - stats.norm.logcdf(q * z))
    return X.T @ lam


def _probit_hessian(b, y, X):
    z = X @ b
    q = 2.0 * y - 1.0
    lam = q * np.exp(stats.norm.logpdf(q * z) - stats.norm.logcdf(q * z))
    w = lam * (lam + z)
    return -(X * w[:, None]).T @ X


def _check_separation(y, X, names):
    pos, neg = y == 1, y == 0
    for j, name in enumerate(names):
        col = X[:, j]
        if np.ptp(col) == 0:
            continue
        if col[pos].max() < col[neg].min() or col[pos].min() > col[neg].max():
            raise SeparationError(f"regressor {name!r} perfectly separates orders")


def fit_probit(y, X, names=PROBIT_NAMES, max_iter=100, tol=1e-10) -> ProbitFit:
    """Probit MLE by damped Newton with analytic derivatives."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if int(y.sum()) < MIN_ORDERS or int((1 - y).sum()) < MIN_ORDERS:
        raise InsufficientDataError(f"need at least {MIN_ORDERS} order and "
                                    f"{MIN_ORDERS} no-order days")
    _check_separation(y, X, names)
    b = np.zeros(X.shape[1])
    b[0] = stats.norm.ppf(y.mean())
    ll = probit_loglik(b, y, X)
    for it in range(1, max_iter + 1):
        g = probit_score(b, y, X)
        H = _probit_hessian(b, y, X)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError as exc:
            raise SingularInformationError("singular Probit Hessian") from exc
        lam = 1.0
        while lam > 1e-8:
            cand = b + lam * step
            ll_c = probit_loglik(cand, y, X)
            if ll_c >= ll - 1e-12:
                break
            lam *= 0.5
        b, ll = cand, ll_c
        if np.abs(probit_score(b, y, X)).max() < tol * max(1.0, len(y)):
            break
    else:
        raise ConvergenceError("Probit did not converge",
                               {"grad_norm": float(np.abs(probit_score(b, y, X)).max())})
    try:
        cov = np.linalg.inv(-_probit_hessian(b, y, X))
    except np.linalg.LinAlgError as exc:
        raise SingularInformationError("singular Probit information") from exc
    return ProbitFit(b, np.sqrt(np.diag(cov)), cov, ll, len(y), it)


# --------------------------------------------------------------------------
# data preparation

@dataclass(frozen=True)
class SsData:
    """Arrays needed by the reduced-form fits."""

    order: np.ndarray
    inventory: np.ndarray
    quantity: np.ndarray
    log_de: np.ndarray
    log_p: np.ndarray

    def probit_design(self):
        return np.column_stack([np.ones(len(self.order)), np.log1p(self.inventory),
                                self.log_de, self.log_p])


def ss_data(panel: Panel, demand: DemandParams) -> SsData:
    """Reduced-form inputs from a panel and a fitted forecasting function."""
    log_de = demand.log_mean(panel.price, panel.trailing7, panel.weekend, panel.holiday)
    return SsData((panel.order > 0).astype(float), panel.inventory.astype(float),
                  panel.order.astype(float), np.asarray(log_de, dtype=float),
                  np.log(panel.price))


def fit_order_probit(data: SsData) -> ProbitFit:
    """``P(order) = Phi(b0 + bk ln(k+1) + bd ln d_e + bp ln p)``."""
    return fit_probit(data.order, data.probit_design())


def inverse_mills(z):
    return np.exp(stats.norm.logpdf(z) - stats.norm.logcdf(z))


@dataclass(frozen=True)
class OlsFit:
    coef: np.ndarray
    se: np.ndarray
    resid: np.ndarray


def ols_hc(y, X, ridge=0.0) -> OlsFit:
    """OLS with HC0 standard errors; ``ridge`` adds ``ridge * I`` to ``X'X``."""
    XtX = X.T @ X + ridge * np.eye(X.shape[1])
    XtX_inv = np.linalg.inv(XtX)
    coef = XtX_inv @ (X.T @ y)
    resid = y - X @ coef
    meat = (X * resid[:, None] ** 2).T @ X
    cov = XtX_inv @ meat @ XtX_inv
    return OlsFit(coef, np.sqrt(np.diag(cov)), resid)


def fit_upper_heckman(data: SsData, probit: ProbitFit, cond_limit=1e10) -> OlsFit:
    """Second stage: ``ln(k+y)`` on ``(1, ln d_e, ln p, mills)`` over order days.

    ``ln(k+1)`` is the exclusion restriction: it enters selection only.
    """
    on = data.order == 1
    if int(on.sum()) < MIN_ORDERS:
        raise InsufficientDataError(f"need at least {MIN_ORDERS} order days")
    z = probit.index(data.probit_design()[on])
    X = np.column_stack([np.ones(int(on.sum())), data.log_de[on], data.log_p[on],
                         inverse_mills(z)])
    y = np.log(data.inventory[on] + data.quantity[on])
    ridge = 0.0
    if np.linalg.cond(X.T @ X) > cond_limit:
        warnings.warn("inverse Mills ratio is nearly collinear with the outcome "
                      "regressors; using a ridge of 1e-8", RuntimeWarning, stacklevel=2)
        ridge = 1e-8
    return ols_hc(y, X, ridge)


def fit_naive_upper(data: SsData) -> OlsFit:
    """Upper-threshold regression without the selection correction."""
    on = data.order == 1
    X = np.column_stack([np.ones(int(on.sum())), data.log_de[on], data.log_p[on]])
    return ols_hc(np.log(data.inventory[on] + data.quantity[on]), X)


def fit_ss_rule(data: SsData) -> SsRuleParams:
    """Probit then Heckman; maps Probit coefficients to threshold units."""
    pr = fit_order_probit(data)
    bk = pr.coef[1]
    sigma = -1.0 / bk
    rest = pr.coef[[0, 2, 3]]
    beta_lower = rest * sigma
    # delta method for b_j * sigma = -b_j / bk
    idx = [0, 2, 3]
    se = np.empty(3)
    for n, j in enumerate(idx):
        grad = np.zeros(4)
        grad[j] = -1.0 / bk
        grad[1] = pr.coef[j] / bk ** 2
        se[n] = np.sqrt(grad @ pr.cov @ grad)
    up = fit_upper_heckman(data, pr)
    return SsRuleParams(pr.coef, pr.se, float(sigma), beta_lower, se, up.coef, up.se)


def thresholds_at(params: SsRuleParams, ln_de_mean: float, ln_p_mean: float) -> Thresholds:
    x = np.array([1.0, ln_de_mean, ln_p_mean])
    return Thresholds(float(params.beta_lower @ x), float(params.upper[:3] @ x))


# --------------------------------------------------------------------------
# planted (S, s) agent

@dataclass(frozen=True)
class PlantedSs:
    """Log-threshold coefficients on ``(1, ln d_e, ln p)`` and shock laws."""

    beta_s: tuple = (1.0, 1.0, 0.0)
    beta_S: tuple = (2.6, 1.0, 0.0)
    sigma_us: float = 0.3
    sigma_uS: float = 0.2
    rho: float = 0.0


def simulate_ss_agent(planted: PlantedSs, T: int, seed: int, log_de_mean=0.0,
                      log_de_sd=0.25, log_de_ar=0.9, prices=(1.05, 0.95),
                      switch_prob=0.02, alpha=0.33, k0=20.0) -> SsData:
    """Simulate an agent who follows a noisy (S, s) rule exactly.

    Expected demand follows a Gaussian AR(1) in logs; demand is NB2.
    """
    rng = np.random.default_rng(seed)
    e = rng.normal(size=T)
    log_de = np.empty(T)
    x = 0.0
    innov = log_de_sd * np.sqrt(1.0 - log_de_ar ** 2)
    for t in range(T):
        x = log_de_ar * x + innov * e[t]
        log_de[t] = log_de_mean + x
    switch = rng.random(T) < switch_prob
    p_idx = np.cumsum(switch) % len(prices)
    log_p = np.log(np.asarray(prices))[p_idx]
    z = rng.normal(size=(T, 2))
    u_s = planted.sigma_us * z[:, 0]
    u_S = planted.sigma_uS * (planted.rho * z[:, 0] + np.sqrt(1 - planted.rho ** 2) * z[:, 1])
    X = np.column_stack([np.ones(T), log_de, log_p])
    log_s = X @ np.asarray(planted.beta_s) + u_s
    log_S = X @ np.asarray(planted.beta_S) + u_S
    mu = np.exp(log_de)
    r = 1.0 / alpha
    demand = rng.negative_binomial(r, r / (r + mu))
    k = np.empty(T)
    y = np.zeros(T)
    order = np.zeros(T)
    kt = float(k0)
    for t in range(T):
        k[t] = kt
        if np.log1p(kt) <= log_s[t]:
            order[t] = 1.0
            y[t] = max(np.exp(log_S[t]) - kt, 0.0)
        kt = kt + y[t] - min(demand[t], kt)
    return SsData(order, k, y, log_de, log_p)


# --------------------------------------------------------------------------
# cross-store summaries

def shrink(estimates, ses) -> np.ndarray:
    """Empirical-Bayes contraction towards the cross-unit mean.

    ``g* = mean + sqrt(max(0, 1 - se^2 / Var(g))) (g - mean)`` with the
    population variance of the estimates.
    """
    g = np.asarray(estimates, dtype=float)
    s2 = np.asarray(ses, dtype=float) ** 2
    if g.shape != s2.shape:
        raise ValueError("estimates and ses must have equal length")
    v = g.var()
    if not v > 0:
        raise ValueError("estimates have zero variance")
    factor = np.sqrt(np.maximum(0.0, 1.0 - s2 / v))
    m = g.mean()
    return m + factor * (g - m)


def variance_decomposition(estimates) -> tuple:
    """Between-store and within-store variance of a stores x products array.

    ``between`` is the variance of store means and ``within`` the mean of
    the within-store variances across products (population moments), so
    on a balanced array ``between + within`` equals the total variance.
    """
    a = np.asarray(estimates, dtype=float)
    if a.ndim != 2 or a.shape[0] < 2:
        raise ValueError("need at least two stores to split the variance")
    if a.shape[1] < 2:
        raise ValueError("within-store variance needs at least two products")
    return float(a.mean(axis=1).var()), float(a.var(axis=1).mean())


def homogeneity_bands(estimates, ses, level=0.95, center: Optional[float] = None):
    """Bonferroni bands around the cross-unit median.

    Returns ``(lower, upper, outside)``: unit ``i`` is flagged when its
    estimate lies outside ``center +/- z * se_i`` with
    ``z = Phi^{-1}(1 - (1 - level) / (2 n))``.
    """
    g = np.asarray(estimates, dtype=float)
    s = np.asarray(ses, dtype=float)
    c = float(np.median(g)) if center is None else center
    z = stats.norm.ppf(1.0 - (1.0 - level) / (2.0 * len(g)))
    lo, hi = c - z * s, c + z * s
    return lo, hi, (g < lo) | (g > hi)
