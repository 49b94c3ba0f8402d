"""Two-step pseudo-maximum-likelihood (2PML) estimation of perceived costs.

Step one estimates choice probabilities nonparametrically with a kernel in
the (standardised) discrete state. Step two maximises the pseudo
likelihood of the observed choices under one policy-iteration step
``psi = lambda o upsilon`` from those probabilities.

With ``P`` fixed the valuation is linear in the payoff weights:
``V(theta) = W_H theta + w_e`` where ``W_H`` and ``w_e`` solve the valuation
system with right-hand sides ``sum_y P(y) H(y)`` and
``sum_y P(y) (euler - ln P(y))``. Choice values are therefore
``Z(x, y) theta + c(x, y)`` with ``Z = H + beta F W_H`` and the pseudo
likelihood is a conditional logit in ``theta``; its gradient is exact.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import logsumexp, softmax

from .dp_solver import (K_GRID, Y_GRID, CcpTable, DiscreteModel, _bordered_solve,
                        build_transitions, discretize, estimate_exogenous_kernels,
                        induced_chain)
from .errors import ConvergenceError, InsufficientDataError
from .model_core import DAILY_BETA, EULER

log = logging.getLogger(__name__)

CCP_FLOOR = 1e-6
# box on coefficients: |theta_j| * max |Z_j - mean_a Z_j| <= LOGIT_MAX, i.e. far
# beyond any effect on choice probabilities that data can pin down
LOGIT_MAX = 100.0
THETA1_MIN = 1e-8  # same units; theta_1 below this means revenue is ignored
THETA_NAMES = ("inv_sigma", "gamma_h", "gamma_z", "gamma_f", "gamma_c")


@dataclass(frozen=True)
class StructuralFit:
    """2PML estimates.

    ``theta`` is ``(1/sigma, gh/sigma, gz/sigma, gf/sigma, gc/sigma)``;
    ``costs`` are elements two to five divided by the first.
    """

    theta: np.ndarray
    theta_se: np.ndarray
    costs: np.ndarray
    costs_se: np.ndarray
    loglik: float
    n_obs: int
    grad_norm: float
    iterations: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def sigma_eps(self) -> float:
        return 1.0 / float(self.theta[0])

    @property
    def t_stats(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.costs / self.costs_se


# --------------------------------------------------------------------------
# first stage

def kernel_weight(dist, T):
    """``K_T(u) = 1 / (1 + sqrt(T) ||u||)``."""
    return 1.0 / (1.0 + np.sqrt(T) * np.asarray(dist, dtype=float))


def state_coordinates(model: DiscreteModel) -> np.ndarray:
    """Raw coordinates ``(k, price, ln(Q7+1), weekend, holiday)`` per state."""
    sp = model.space
    tab = sp.state_table()
    return np.column_stack([tab[:, 0].astype(float), sp.price_centers[tab[:, 1]],
                            sp.lnq_centers[tab[:, 2]], tab[:, 3], tab[:, 4]])


def kernel_ccp(states, actions, coords, n_actions, floor=CCP_FLOOR) -> CcpTable:
    """Kernel-weighted choice frequencies at every state.

    ``coords`` holds one row of state coordinates per state; they are
    standardised with the standard deviation over the sample observations
    (coordinates without sample variation are left unscaled).
    """
    states = np.asarray(states, dtype=np.int64)
    actions = np.asarray(actions, dtype=np.int64)
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords[:, None]
    T = len(states)
    if T == 0:
        raise InsufficientDataError("no observations for the CCP estimator")
    sd = coords[states].std(axis=0)
    z = coords / np.where(sd > 0, sd, 1.0)
    n_states = coords.shape[0]
    counts = np.zeros((n_states, n_actions))
    np.add.at(counts, (states, actions), 1.0)
    seen = np.nonzero(counts.sum(axis=1))[0]
    diff = z[:, None, :] - z[None, seen, :]
    W = kernel_weight(np.sqrt((diff ** 2).sum(axis=2)), T)
    num = W @ counts[seen]
    P = num / num.sum(axis=1, keepdims=True)
    P = np.maximum(P, floor)
    return CcpTable(P / P.sum(axis=1, keepdims=True))


def frequency_ccp(states, actions, n_states, n_actions) -> np.ndarray:
    """Raw conditional choice frequencies (NaN rows for unvisited states)."""
    counts = np.zeros((n_states, n_actions))
    np.add.at(counts, (np.asarray(states), np.asarray(actions)), 1.0)
    with np.errstate(invalid="ignore"):
        return counts / counts.sum(axis=1, keepdims=True)


# --------------------------------------------------------------------------
# second stage

class PmlProblem:
    """Pseudo likelihood of aggregated (state, action) counts at fixed CCPs."""

    def __init__(self, model: DiscreteModel, P, states, actions, beta=DAILY_BETA):
        probs = P.probs if isinstance(P, CcpTable) else np.asarray(P, dtype=float)
        if not np.all(probs > 0):
            raise ValueError("first-stage CCPs must be strictly positive")
        self.model = model
        self.beta = float(beta)
        self.probs = probs
        n, A = model.n_states, model.n_actions
        self.counts = np.zeros((n, A))
        np.add.at(self.counts, (np.asarray(states), np.asarray(actions)), 1.0)
        self.n_obs = int(self.counts.sum())
        rhs = np.column_stack([
            np.einsum("xa,axf->xf", probs, model.H),
            (probs * (EULER - np.log(probs))).sum(axis=1),
        ])
        if self.beta > 0:
            # only the relative part matters: level terms are common to all actions
            W, _ = _bordered_solve(induced_chain(model, probs), rhs, self.beta)
            cont = np.einsum("axz,zf->xaf", model.F, W)
        else:
            cont = np.zeros((n, A, rhs.shape[1]))
        self.Z = np.transpose(model.H, (1, 0, 2)) + self.beta * cont[:, :, :-1]
        self.c = self.beta * cont[:, :, -1]
        used = self.counts.sum(axis=1) > 0
        # the logit is invariant to per-state shifts; centring across actions keeps
        # huge coefficients on nearly constant features from cancelling catastrophically
        Zu, cu = self.Z[used], self.c[used]
        self._Zu = Zu - Zu.mean(axis=1, keepdims=True)
        self._cu = cu - cu.mean(axis=1, keepdims=True)
        self._Nu = self.counts[used]

    def action_values(self, theta) -> np.ndarray:
        return self.Z @ np.asarray(theta, dtype=float) + self.c

    def ccp(self, theta) -> np.ndarray:
        """``psi(P)``: logit best response to the valuation of ``P``."""
        return softmax(self.action_values(theta), axis=1)

    def loglik(self, theta) -> float:
        v = self._Zu @ theta + self._cu
        return float((self._Nu * (v - logsumexp(v, axis=1, keepdims=True))).sum())

    def _scores(self, theta):
        v = self._Zu @ theta + self._cu
        p = softmax(v, axis=1)
        zbar = np.einsum("xa,xaf->xf", p, self._Zu)
        return self._Zu - zbar[:, None, :], p

    def gradient(self, theta) -> np.ndarray:
        s, _ = self._scores(theta)
        return np.einsum("xa,xaf->f", self._Nu, s)

    def hessian(self, theta) -> np.ndarray:
        s, p = self._scores(theta)
        n_x = self._Nu.sum(axis=1)
        return -np.einsum("x,xa,xaf,xag->fg", n_x, p, s, s)

    def opg(self, theta) -> np.ndarray:
        s, _ = self._scores(theta)
        return np.einsum("xa,xaf,xag->fg", self._Nu, s, s)


def pseudo_loglik(theta, P, model: DiscreteModel, states, actions, beta=DAILY_BETA) -> float:
    """``sum_t ln psi(y_t | x_t; P, theta)``."""
    return PmlProblem(model, P, states, actions, beta).loglik(np.asarray(theta, dtype=float))


def _robust_inverse(M, rel_floor=1e-12):
    """Inverse through the eigendecomposition with tiny eigenvalues floored,
    so flat directions come out with very large (not infinite) variances."""
    w, U = np.linalg.eigh(0.5 * (M + M.T))
    floor = rel_floor * max(float(w.max()), 1e-300)
    w = np.maximum(w, floor)
    return (U / w) @ U.T


def two_step_pml(model: DiscreteModel, P, states, actions, beta=DAILY_BETA,
                 theta0=None, max_iter=500, tol=1e-8) -> StructuralFit:
    """Maximise the pseudo likelihood with ``theta_1 = exp(w_1) > 0``.

    Coefficients are optimised on a feature-standardised scale inside a box
    capping each coefficient's largest logit effect at ``LOGIT_MAX`` (and
    ``theta_1``'s smallest at ``THETA1_MIN``). A coordinate that ends on the
    box is a direction
    along which the likelihood keeps rising (e.g. no stockouts in the
    sample); it is listed in ``diagnostics["at_bound"]`` and its standard
    error comes out large, but the fit is not treated as a failure.
    """
    actions = np.asarray(actions)
    if len(actions) == 0 or np.unique(actions).size < 2:
        raise InsufficientDataError("choices show no variation; costs are not identified")
    prob = PmlProblem(model, P, states, actions, beta)
    # rescale features so every coordinate is of order one in the optimiser
    zs = prob._Zu.reshape(-1, prob._Zu.shape[-1]).std(axis=0)
    scale = np.where(zs > 0, zs, 1.0)
    if theta0 is None:
        theta0 = np.array([1.0 / scale[0], 0.0, 0.0, 0.0, 0.0])
    dev = np.abs(prob._Zu - prob._Zu.mean(axis=1, keepdims=True)).reshape(
        -1, prob._Zu.shape[-1]).max(axis=0)
    wmax = LOGIT_MAX * scale / np.where(dev > 0, dev, 1.0)
    bounds = [(np.log(THETA1_MIN / LOGIT_MAX * wmax[0]), np.log(wmax[0]))]
    bounds += [(-wmax[j], wmax[j]) for j in range(1, 5)]

    def unpack(w):
        t = w / scale
        t[0] = np.exp(w[0]) / scale[0]
        return t

    def pack(t):
        w = t * scale
        w[0] = np.log(max(t[0] * scale[0], 1e-300))
        return w

    def f(w):
        return -prob.loglik(unpack(w)) / prob.n_obs

    def g(w):
        t = unpack(w)
        gt = prob.gradient(t) / scale
        gt[0] *= np.exp(w[0])
        return -gt / prob.n_obs

    w0 = np.clip(pack(np.asarray(theta0, dtype=float)), *np.array(bounds).T)
    res = optimize.minimize(f, w0, jac=g, method="L-BFGS-B", bounds=bounds,
                            options={"maxiter": max_iter, "gtol": tol, "ftol": 1e-15})
    w = res.x
    lo, hi = np.array(bounds).T
    free = (w > lo + 1e-6 * (hi - lo)) & (w < hi - 1e-6 * (hi - lo))
    # Newton polish in theta over the free coordinates; the objective is concave
    theta = unpack(w)
    for _ in range(50):
        if not free.any():
            break
        gr = prob.gradient(theta)[free]
        H = prob.hessian(theta)[np.ix_(free, free)]
        step = np.zeros_like(theta)
        step[free] = -np.linalg.lstsq(H, gr, rcond=None)[0]
        lam, base = 1.0, prob.loglik(theta)
        while lam > 1e-10:
            cand = theta + lam * step
            wc = pack(cand) if cand[0] > 0 else None
            # fixed coordinates are excluded: exp/log round-off can move them off the box
            if (wc is not None and np.all(wc[free] >= lo[free]) and np.all(wc[free] <= hi[free])
                    and prob.loglik(cand) >= base - 1e-12 * abs(base)):
                break
            lam *= 0.5
        else:
            break
        theta = cand
        if np.abs(prob.gradient(theta)[free] / scale[free]).max() < tol * prob.n_obs:
            break
    grad = prob.gradient(theta)
    grad_norm = float(np.abs(grad / scale)[free].max() / prob.n_obs) if free.any() else 0.0
    if not np.all(np.isfinite(theta)) or grad_norm > 1e-4:
        raise ConvergenceError("pseudo likelihood maximisation failed",
                               {"grad_norm": grad_norm, "iterations": res.nit})

    cov = _robust_inverse(prob.opg(theta))
    theta_se = np.sqrt(np.diag(cov))
    costs = theta[1:] / theta[0]
    J = np.zeros((4, 5))
    J[:, 0] = -theta[1:] / theta[0] ** 2
    J[:, 1:] = np.eye(4) / theta[0]
    costs_se = np.sqrt(np.diag(J @ cov @ J.T))
    at_bound = [THETA_NAMES[j] for j in np.nonzero(~free)[0]]
    if at_bound:
        log.info("2PML: likelihood flat or unbounded along %s", ", ".join(at_bound))
    diag = {"floor_share": float(np.mean(prob.probs <= CCP_FLOOR * 1.0001)),
            "optimizer_message": str(res.message), "at_bound": at_bound}
    return StructuralFit(theta, theta_se, costs, costs_se, prob.loglik(theta),
                         prob.n_obs, grad_norm, int(res.nit), diag)


def estimation_model(panel, demand, lerner, n_clusters=2, seed=0, k_grid=K_GRID,
                     y_grid=Y_GRID) -> DiscreteModel:
    """Discretize ``panel`` and build the DP model used by the second stage.

    The estimated exogenous kernels are kept in ``model.info["exo"]``.
    """
    space, _, _ = discretize(panel, k_grid, y_grid, n_clusters=n_clusters, seed=seed)
    exo = estimate_exogenous_kernels(panel, space)
    model = build_transitions(space, exo, demand, lerner)
    model.info["exo"] = exo
    return model


def fit_panel(panel, model: DiscreteModel, beta=DAILY_BETA, floor=CCP_FLOOR,
              max_iter=500, tol=1e-8) -> StructuralFit:
    """Map a panel to ``model``'s states, estimate kernel CCPs, run 2PML."""
    sp = model.space
    states = sp.state_of(panel.inventory, panel.price, panel.trailing7,
                         panel.weekend, panel.holiday)
    actions = sp.action_of(panel.order)
    P = kernel_ccp(states, actions, state_coordinates(model), model.n_actions, floor)
    return two_step_pml(model, P, states, actions, beta, max_iter=max_iter, tol=tol)
