"""Negative Binomial (NB2) sales-forecasting regression by maximum likelihood.

Regressors, in order: weekend, holiday, intercept, ``ln p``, ``ln(Q7 + 1)``.
Over-dispersion is optimised on ``alpha = 1e-8 + exp(t)`` so the Poisson
boundary is approached smoothly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import gammaln

from .errors import ConvergenceError, InsufficientDataError, SingularInformationError
from .model_core import DemandParams, Panel, demand_regressors

log = logging.getLogger(__name__)

ALPHA_FLOOR = 1e-8
MIN_ROWS = 50
COEF_NAMES = ("weekend", "holiday", "intercept", "log_price", "log_trailing", "alpha")


@dataclass(frozen=True)
class DemandFit:
    params: DemandParams
    se: np.ndarray
    loglik: float
    pseudo_r2: float
    n_obs: int
    grad_norm: float = 0.0
    iterations: int = 0

    @property
    def estimates(self) -> np.ndarray:
        return np.append(self.params.coef, self.params.alpha)

    def conf_int(self, level_z=1.959963984540054) -> np.ndarray:
        est = self.estimates
        return np.column_stack([est - level_z * self.se, est + level_z * self.se])


def _alpha(t):
    return ALPHA_FLOOR + np.exp(t)


def _log1p_over_sq(alpha, mu):
    """``(log1p(a mu) - a mu / (1 + a mu)) / a**2``, accurate for small ``a mu``."""
    x = alpha * mu
    small = x < 1e-4
    xs = np.where(small, x, 0.0)
    series = mu ** 2 * (0.5 - 2.0 * xs / 3.0 + 0.75 * xs ** 2 - 0.8 * xs ** 3)
    xl = np.where(small, 1.0, x)
    direct = (np.log1p(xl) - xl / (1.0 + xl)) / alpha ** 2
    return np.where(small, series, direct)


class _NegBinLik:
    """Log-likelihood and score in ``(eta, t)`` with cached count tables."""

    def __init__(self, X, y):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=np.int64)
        self.top = int(self.y.max()) if self.y.size else 0
        self.j = np.arange(self.top, dtype=float)
        self.lgy = gammaln(self.y + 1.0)

    def _tables(self, alpha):
        # cumulative sums over j < y of log1p(alpha j) and j / (1 + alpha j)
        c1 = np.concatenate(([0.0], np.cumsum(np.log1p(alpha * self.j))))
        c2 = np.concatenate(([0.0], np.cumsum(self.j / (1.0 + alpha * self.j))))
        return c1[self.y], c2[self.y]

    def loglik_obs(self, w):
        eta, t = w[:-1], w[-1]
        alpha = _alpha(t)
        xb = self.X @ eta
        mu = np.exp(xb)
        s1, _ = self._tables(alpha)
        return s1 + self.y * xb - (self.y + 1.0 / alpha) * np.log1p(alpha * mu) - self.lgy

    def loglik(self, w):
        return float(self.loglik_obs(w).sum())

    def score_obs(self, w):
        eta, t = w[:-1], w[-1]
        alpha = _alpha(t)
        mu = np.exp(self.X @ eta)
        _, s2 = self._tables(alpha)
        g_eta = ((self.y - mu) / (1.0 + alpha * mu))[:, None] * self.X
        g_alpha = s2 - self.y * mu / (1.0 + alpha * mu) + _log1p_over_sq(alpha, mu)
        return np.column_stack([g_eta, g_alpha * (alpha - ALPHA_FLOOR)])

    def score(self, w):
        return self.score_obs(w).sum(axis=0)

    def hessian(self, w, rel_step=1e-5):
        """Central differences of the analytic score."""
        k = w.size
        Hm = np.empty((k, k))
        for i in range(k):
            h = rel_step * max(1.0, abs(w[i]))
            e = np.zeros(k)
            e[i] = h
            Hm[:, i] = (self.score(w + e) - self.score(w - e)) / (2 * h)
        return 0.5 * (Hm + Hm.T)


def loglik(params: DemandParams, X, y) -> float:
    """NB2 log-likelihood of counts ``y`` with design ``X`` at ``params``."""
    t = np.log(max(params.alpha - ALPHA_FLOOR, 1e-300))
    return _NegBinLik(X, y).loglik(np.append(params.coef, t))


def loglik_gradient(w, X, y):
    """Score in the optimiser parameters ``(coef..., log(alpha - 1e-8))``."""
    return _NegBinLik(X, y).score(np.asarray(w, dtype=float))


def loglik_value(w, X, y):
    return _NegBinLik(X, y).loglik(np.asarray(w, dtype=float))


def _check_design(X, names):
    if np.linalg.matrix_rank(X) < X.shape[1]:
        sd = X.std(axis=0)
        bad = [n for n, s, c in zip(names, sd, X.mean(axis=0))
               if s == 0 and n != "intercept"]
        what = ", ".join(bad) if bad else "collinear columns"
        raise SingularInformationError(f"degenerate demand regressors: {what}")


def _maximise(lik, w0, max_iter, gtol):
    n = lik.X.shape[0]
    res = optimize.minimize(lambda w: -lik.loglik(w) / n, w0,
                            jac=lambda w: -lik.score(w) / n, method="BFGS",
                            options={"maxiter": max_iter, "gtol": gtol})
    w = res.x
    # Newton polish: BFGS leaves the score a few digits above zero
    for _ in range(20):
        g = lik.score(w)
        H = lik.hessian(w)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        base = lik.loglik(w)
        while lam > 1e-6 and not lik.loglik(w + lam * step) >= base - 1e-12:
            lam *= 0.5
        w = w + lam * step
        if np.abs(lik.score(w)).max() <= 1e-8 * max(1.0, n):
            break
    return w, res.nit


def fit_negbin(panel: Panel, max_iter=500, gtol=1e-8) -> DemandFit:
    """Fit the forecasting regression on days with positive opening stock."""
    use = panel.inventory > 0
    if int(use.sum()) < MIN_ROWS:
        raise InsufficientDataError(f"need at least {MIN_ROWS} in-stock days, "
                                    f"got {int(use.sum())}")
    sub = panel.select(use)
    X = demand_regressors(sub.price, sub.trailing7, sub.weekend, sub.holiday)
    y = sub.sales
    _check_design(X, COEF_NAMES[:-1])
    lik = _NegBinLik(X, y)

    ybar = max(float(y.mean()), 1e-3)
    w0 = np.zeros(X.shape[1] + 1)
    w0[2] = np.log(ybar)
    w0[-1] = np.log(0.1)
    w, nit = _maximise(lik, w0, max_iter, gtol)
    g = lik.score(w)
    grad_norm = float(np.abs(g).max())
    if not np.all(np.isfinite(w)) or grad_norm > 1e-4 * max(1.0, len(y)):
        raise ConvergenceError("negative binomial fit did not converge",
                               {"grad_norm": grad_norm, "iterations": nit})

    info = -lik.hessian(w)
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise SingularInformationError("singular information matrix") from exc
    var = np.diag(cov)
    if np.any(~np.isfinite(var)) or np.any(var[:-1] <= 0):
        raise SingularInformationError("information matrix is not positive definite")
    alpha = float(_alpha(w[-1]))
    se = np.sqrt(np.abs(var))
    se[-1] *= alpha - ALPHA_FLOOR  # delta method from log scale

    # intercept-only benchmark
    lik0 = _NegBinLik(np.ones((len(y), 1)), y)
    w00, _ = _maximise(lik0, np.array([np.log(ybar), np.log(0.1)]), max_iter, gtol)
    ll, ll0 = lik.loglik(w), lik0.loglik(w00)
    params = DemandParams(eta0=tuple(w[:3]), eta_p=float(w[3]), eta_Q=float(w[4]),
                          alpha=alpha)
    return DemandFit(params, se, ll, 1.0 - ll / ll0 if ll0 != 0 else 0.0, len(y),
                     grad_norm=grad_norm, iterations=nit)


def forecast(fit, p, Q7, weekend=0, holiday=0):
    """Expected demand and its NB2 variance at the given regressors."""
    params = fit.params if isinstance(fit, DemandFit) else fit
    d_e = params.mean(p, Q7, weekend, holiday)
    return d_e, d_e * (1.0 + params.alpha * d_e)
