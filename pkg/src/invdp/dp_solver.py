"""Discrete state space, transition/payoff matrices and the logit DP solver.

States are ordered exogenous-major: ``index = e * n_k + k_idx`` with the
exogenous index ``e = ((p * n_q + q) * 2 + weekend) * 2 + holiday``.

Values are stored in relative form ``V = h + g / (1 - beta)`` with
``h[0] = 0``. With a daily discount factor the level ``g / (1 - beta)`` is
four orders of magnitude larger than the spread of ``h``; keeping the two
apart preserves the digits that choice probabilities depend on.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.sparse.csgraph import connected_components
from scipy.special import logsumexp, softmax

from . import kernels
from .errors import ConvergenceError, DomainError
from .model_core import (EULER, DemandParams, StructuralParams,
                         min_and_stockout_table, negbin_pmf_vector)

log = logging.getLogger(__name__)

K_GRID = np.arange(0, 101, 2, dtype=np.int64)
Y_GRID = np.arange(0, 49, 6, dtype=np.int64)
N_CAL = 4  # (weekend, holiday) pairs


def snap_k(values, k_step=2, k_max=100):
    """Snap inventories to the even grid (ties up), clipped to ``[0, k_max]``."""
    v = np.asarray(values, dtype=np.int64)
    return np.clip(k_step * ((v + k_step // 2) // k_step), 0, k_max)


def snap_y(values, y_step=6, y_max=48):
    """Snap orders to multiples of ``y_step`` (ties up), clipped to ``[0, y_max]``."""
    v = np.asarray(values, dtype=np.int64)
    return np.clip(y_step * ((v + y_step // 2) // y_step), 0, y_max)


# --------------------------------------------------------------------------
# containers

@dataclass(frozen=True)
class LinearPayoff:
    """Payoff weights applied to the feature columns of ``H`` plus discount."""

    theta: np.ndarray
    beta: float

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise DomainError(f"beta must lie in [0, 1), got {self.beta}")


def as_payoff(params) -> LinearPayoff:
    if isinstance(params, LinearPayoff):
        return params
    if isinstance(params, StructuralParams):
        return LinearPayoff(params.theta(), params.beta)
    theta, beta = params
    return LinearPayoff(np.asarray(theta, dtype=float), float(beta))


@dataclass(frozen=True)
class StateSpace:
    """Grid and cluster definition shared by the data mapping and the DP."""

    price_centers: np.ndarray
    lnq_centers: np.ndarray
    k_grid: np.ndarray = field(default_factory=lambda: K_GRID.copy())
    y_grid: np.ndarray = field(default_factory=lambda: Y_GRID.copy())

    @property
    def n_p(self):
        return len(self.price_centers)

    @property
    def n_q(self):
        return len(self.lnq_centers)

    @property
    def n_k(self):
        return len(self.k_grid)

    @property
    def n_exo(self):
        return self.n_p * self.n_q * N_CAL

    @property
    def n_states(self):
        return self.n_exo * self.n_k

    @property
    def k_step(self):
        return int(self.k_grid[1] - self.k_grid[0]) if self.n_k > 1 else 1

    def exo_index(self, p_idx, q_idx, weekend, holiday):
        return ((np.asarray(p_idx) * self.n_q + q_idx) * 2 + weekend) * 2 + holiday

    def exo_table(self) -> np.ndarray:
        """Rows ``(p_idx, q_idx, weekend, holiday)`` in exogenous order."""
        e = np.arange(self.n_exo)
        return np.column_stack([e // (4 * self.n_q), (e // 4) % self.n_q,
                                (e // 2) % 2, e % 2])

    def state_table(self) -> np.ndarray:
        """Rows ``(k, p_idx, q_idx, weekend, holiday)`` in state order."""
        exo = np.repeat(self.exo_table(), self.n_k, axis=0)
        k = np.tile(self.k_grid, self.n_exo)
        return np.column_stack([k, exo])

    def price_cluster(self, price):
        return _nearest(self.price_centers, price)

    def lnq_cluster(self, trailing):
        return _nearest(self.lnq_centers, np.log1p(np.asarray(trailing, dtype=float)))

    def lnq_threshold(self) -> float:
        """Cut point on ``ln(Q7 + 1)`` separating the two clusters."""
        if self.n_q == 1:
            return np.inf
        return 0.5 * (self.lnq_centers[0] + self.lnq_centers[1])

    def state_of(self, inventory, price, trailing, weekend, holiday):
        k_idx = snap_k(inventory, self.k_step, int(self.k_grid[-1])) // self.k_step
        e = self.exo_index(self.price_cluster(price), self.lnq_cluster(trailing),
                           np.asarray(weekend, dtype=np.int64),
                           np.asarray(holiday, dtype=np.int64))
        return e * self.n_k + k_idx

    def action_of(self, order):
        step = int(self.y_grid[1] - self.y_grid[0])
        return snap_y(order, step, int(self.y_grid[-1])) // step


def _nearest(centers, values):
    values = np.asarray(values, dtype=float)
    if len(centers) == 1:
        return np.zeros(values.shape, dtype=np.int64)
    # sorted centres: nearest centre is decided by midpoints
    mids = 0.5 * (centers[1:] + centers[:-1])
    return np.searchsorted(mids, values, side="left").astype(np.int64)


@dataclass
class DiscreteModel:
    """Transition matrices ``F[a]`` (row-stochastic) and features ``H[a]``.

    ``F`` has shape ``(n_actions, n_states, n_states)`` and ``H`` has shape
    ``(n_actions, n_states, n_features)``. The remaining fields are filled
    for models built from data and are ``None`` for hand-made toys.
    """

    F: np.ndarray
    H: np.ndarray
    y_grid: Optional[np.ndarray] = None
    space: Optional[StateSpace] = None
    inventory: Optional[np.ndarray] = None
    expected_sales: Optional[np.ndarray] = None
    stockout: Optional[np.ndarray] = None
    price: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.F = np.asarray(self.F, dtype=float)
        self.H = np.asarray(self.H, dtype=float)
        if self.F.ndim != 3 or self.F.shape[1] != self.F.shape[2]:
            raise DomainError("F must have shape (n_actions, n_states, n_states)")
        if self.H.shape[:2] != self.F.shape[:2]:
            raise DomainError("H must have shape (n_actions, n_states, n_features)")
        if self.y_grid is None:
            self.y_grid = np.arange(self.F.shape[0])

    @property
    def n_states(self):
        return self.F.shape[1]

    @property
    def n_actions(self):
        return self.F.shape[0]

    def flow(self, theta) -> np.ndarray:
        """Flow payoffs ``H(y) theta`` as an ``(n_states, n_actions)`` array."""
        return (self.H @ np.asarray(theta, dtype=float)).T

    def max_row_error(self) -> float:
        return float(np.abs(self.F.sum(axis=2) - 1.0).max())


@dataclass(frozen=True)
class ValueVector:
    """Integrated values ``V = relative + gain / (1 - beta)``."""

    relative: np.ndarray
    gain: float
    beta: float
    iterations: int = 0
    residual: float = 0.0

    @property
    def values(self) -> np.ndarray:
        return self.relative + self.gain / (1.0 - self.beta)


@dataclass(frozen=True)
class CcpTable:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2:
            raise DomainError("CCP table must be (n_states, n_actions)")
        object.__setattr__(self, "probs", p)

    def order_probability(self) -> np.ndarray:
        return 1.0 - self.probs[:, 0]


# --------------------------------------------------------------------------
# discretization

def kmeans_1d(values, n_clusters=2, seed=0):
    """Sorted k-means centres of a scalar variable.

    Falls back to a single cluster (with a warning) when the variable has
    no variation or fewer distinct values than requested clusters.
    """
    from sklearn.cluster import KMeans

    x = np.asarray(values, dtype=float).reshape(-1, 1)
    distinct = np.unique(x)
    if distinct.size < n_clusters or np.var(x) == 0.0:
        if n_clusters > 1:
            warnings.warn("degenerate variable for clustering; using one cluster",
                          RuntimeWarning, stacklevel=2)
        return np.array([float(x.mean())])
    if distinct.size == n_clusters:
        return distinct.astype(float)
    km = KMeans(n_clusters=n_clusters, init="k-means++", n_init=10, random_state=seed)
    km.fit(x)
    return np.sort(km.cluster_centers_.ravel())


def discretize(panel, k_grid=K_GRID, y_grid=Y_GRID, n_clusters=2, seed=0):
    """Cluster price and ``ln(Q7 + 1)`` and map every panel row to a state.

    Returns ``(space, states, actions)`` where ``states`` and ``actions``
    index the rows of ``panel``.
    """
    if len(panel) == 0:
        raise DomainError("panel is empty")
    space = StateSpace(price_centers=kmeans_1d(panel.price, n_clusters, seed),
                       lnq_centers=kmeans_1d(np.log1p(panel.trailing7), n_clusters, seed),
                       k_grid=np.asarray(k_grid, dtype=np.int64),
                       y_grid=np.asarray(y_grid, dtype=np.int64))
    states = space.state_of(panel.inventory, panel.price, panel.trailing7,
                            panel.weekend, panel.holiday)
    return space, states, space.action_of(panel.order)


def between_variance_share(values, centers) -> float:
    """Share of the variance of ``values`` explained by cluster means."""
    values = np.asarray(values, dtype=float)
    lab = _nearest(np.asarray(centers), values)
    total = values.var()
    if total == 0:
        return 1.0
    means = np.array([values[lab == c].mean() if np.any(lab == c) else 0.0
                      for c in range(len(centers))])
    return float(((means[lab] - values.mean()) ** 2).mean() / total)


# --------------------------------------------------------------------------
# exogenous kernels and transitions

@dataclass(frozen=True)
class ExogenousKernels:
    """Empirical laws of motion of the exogenous state components.

    ``q_kernel[q, b, q']`` conditions on the current trailing-sales cluster
    and the tercile ``b`` of realised sales; ``sales_cuts`` are the tercile
    upper bounds for bins 0 and 1.
    """

    price_matrix: np.ndarray
    q_kernel: np.ndarray
    calendar_matrix: np.ndarray
    sales_cuts: tuple

    def exo_matrix(self, space: StateSpace) -> np.ndarray:
        """``P[e, b, e']`` over exogenous indices."""
        n_p, n_q = space.n_p, space.n_q
        # axes: p, q, c, b, p', q', c'
        P = np.einsum("ad,qbe,cf->aqcbdef", self.price_matrix, self.q_kernel,
                      self.calendar_matrix)
        return P.reshape(n_p * n_q * N_CAL, 3, n_p * n_q * N_CAL)


def sales_bins(sales, cuts):
    s = np.asarray(sales, dtype=float)
    return np.where(s <= cuts[0], 0, np.where(s <= cuts[1], 1, 2))


def _row_frequencies(counts, fallback, what):
    counts = np.asarray(counts, dtype=float)
    tot = counts.sum(axis=-1, keepdims=True)
    empty = tot[..., 0] == 0
    if np.any(empty):
        warnings.warn(f"{int(empty.sum())} empty cells in the {what} kernel; "
                      "using unconditional frequencies", RuntimeWarning, stacklevel=3)
    return np.where(tot > 0, counts / np.where(tot > 0, tot, 1.0), fallback)


def estimate_exogenous_kernels(panel, space: StateSpace) -> ExogenousKernels:
    """Frequency estimates of the price, trailing-sales and calendar laws.

    Transitions are counted between consecutive days of the same
    store-product.
    """
    cuts = tuple(float(c) for c in np.quantile(panel.sales, [1 / 3, 2 / 3]))
    p_idx = space.price_cluster(panel.price)
    q_idx = space.lnq_cluster(panel.trailing7)
    cal = 2 * np.asarray(panel.weekend, dtype=np.int64) + np.asarray(panel.holiday, dtype=np.int64)
    b = sales_bins(panel.sales, cuts)
    same = ((panel.store_id[1:] == panel.store_id[:-1])
            & (panel.product_id[1:] == panel.product_id[:-1])
            & (panel.day[1:] == panel.day[:-1] + 1))
    cur, nxt = np.nonzero(same)[0], np.nonzero(same)[0] + 1
    n_p, n_q = space.n_p, space.n_q

    pc = np.zeros((n_p, n_p))
    np.add.at(pc, (p_idx[cur], p_idx[nxt]), 1.0)
    p_marg = np.bincount(p_idx, minlength=n_p) / len(p_idx)
    price_matrix = _row_frequencies(pc, p_marg, "price")

    qc = np.zeros((n_q, 3, n_q))
    np.add.at(qc, (q_idx[cur], b[cur], q_idx[nxt]), 1.0)
    q_marg = np.bincount(q_idx[nxt], minlength=n_q).astype(float)
    q_marg /= max(q_marg.sum(), 1.0)
    # first fallback: ignore the sales tercile, then the current cluster
    q_only = _row_frequencies(qc.sum(axis=1), q_marg, "trailing-sales")
    q_kernel = _row_frequencies(qc, q_only[:, None, :], "trailing-sales")

    cc = np.zeros((N_CAL, N_CAL))
    np.add.at(cc, (cal[cur], cal[nxt]), 1.0)
    c_marg = np.bincount(cal, minlength=N_CAL) / len(cal)
    calendar_matrix = _row_frequencies(cc, c_marg, "calendar")
    return ExogenousKernels(price_matrix, q_kernel, calendar_matrix, cuts)


def exo_demand_means(space: StateSpace, demand: DemandParams) -> np.ndarray:
    """Expected demand at every exogenous cluster centre."""
    tab = space.exo_table()
    price = space.price_centers[tab[:, 0]]
    lnq = space.lnq_centers[tab[:, 1]]
    eta = demand.eta0
    return np.exp(eta[0] * tab[:, 2] + eta[1] * tab[:, 3] + eta[2]
                  + demand.eta_p * np.log(price) + demand.eta_Q * lnq)


def build_transitions(space: StateSpace, exo: ExogenousKernels, demand: DemandParams,
                      lerner: float, pmf_override=None) -> DiscreteModel:
    """Assemble ``F_x(y)`` and ``H(y)`` over the full state space.

    ``pmf_override`` (callable ``e -> pmf``) replaces the NB demand law; it
    exists for degenerate checks such as a point mass at zero.
    """
    nk, ny, ne = space.n_k, len(space.y_grid), space.n_exo
    n = space.n_states
    k_max = int(space.k_grid[-1])
    P_exo = exo.exo_matrix(space)
    d_e = exo_demand_means(space, demand)
    tab = space.exo_table()
    price = space.price_centers[tab[:, 0]]

    F = np.empty((ny, n, n))
    H = np.empty((ny, n, 5))
    sales = np.empty(n)
    stock = np.empty(n)
    y = space.y_grid.astype(float)
    for e in range(ne):
        if pmf_override is None:
            pmf = negbin_pmf_vector(float(d_e[e]), demand.alpha)
        else:
            pmf = np.asarray(pmf_override(e), dtype=float)
        s_e, z_e = min_and_stockout_table(space.k_grid, pmf)
        rows = slice(e * nk, (e + 1) * nk)
        sales[rows], stock[rows] = s_e, z_e
        G = kernels.accumulate_k_transitions(
            pmf / pmf.sum(), space.k_grid, space.y_grid,
            float(exo.sales_cuts[0]), float(exo.sales_cuts[1]), space.k_step, k_max)
        # F[a, i, f, j] = sum_b G[i, a, j, b] P[e, b, f]
        F[:, rows, :] = np.einsum("iajb,bf->aifj", G, P_exo[e]).reshape(ny, nk, n)
        H[:, rows, 0] = lerner * price[e] * s_e
        H[:, rows, 1] = -space.k_grid
        H[:, rows, 2] = z_e
        H[:, rows, 3] = -(y[:, None] > 0).astype(float)
        H[:, rows, 4] = -y[:, None]
    # snapping and truncation can leave round-off; rows are renormalised
    F /= F.sum(axis=2, keepdims=True)
    st = space.state_table()
    return DiscreteModel(F=F, H=H, y_grid=space.y_grid, space=space,
                         inventory=st[:, 0].astype(float), expected_sales=sales,
                         stockout=stock, price=np.repeat(price, nk),
                         info={"lerner": lerner, "demand_mean": np.repeat(d_e, nk),
                               "alpha": demand.alpha})


# --------------------------------------------------------------------------
# Bellman operators

def _action_values(model: DiscreteModel, pay: LinearPayoff, rel: np.ndarray) -> np.ndarray:
    """``H(y) theta + beta F_x(y) V`` as ``(n_states, n_actions)``."""
    cont = (model.F @ rel).T if pay.beta > 0 else 0.0
    return model.flow(pay.theta) + pay.beta * cont


def action_values(model: DiscreteModel, params, V) -> np.ndarray:
    """Choice-specific values in relative form (shift-equivalent to the levels)."""
    rel = V.relative if isinstance(V, ValueVector) else np.asarray(V, dtype=float)
    return _action_values(model, as_payoff(params), rel)


def ccp_from_values(model: DiscreteModel, params, V) -> CcpTable:
    """Logit best response to values (policy improvement)."""
    return CcpTable(softmax(action_values(model, params, V), axis=1))


def _check_ccp(P: np.ndarray):
    if not np.all(P > 0) or not np.all(np.isfinite(P)):
        raise DomainError("CCP table must be strictly positive and finite")


def _bordered_solve(M: np.ndarray, u: np.ndarray, beta: float):
    """Solve ``(I - beta M) V = u`` as ``V = h + g/(1-beta)``, ``h[0] = 0``.

    Replacing the first column of ``I - beta M`` by ones removes the
    near-singular direction ``1`` (whose eigenvalue is ``1 - beta``).
    """
    n = M.shape[0]
    B = -beta * M
    B[np.diag_indices(n)] += 1.0
    B[:, 0] = 1.0
    try:
        z = linalg.solve(B, u, check_finite=True)
    except linalg.LinAlgError as exc:
        raise linalg.LinAlgError(f"valuation system is singular: {exc}") from exc
    g = z[0].copy() if z.ndim > 1 else float(z[0])
    h = z.copy()
    h[0] = 0.0
    return h, g


def induced_chain(model: DiscreteModel, P) -> np.ndarray:
    """State transition matrix ``M = sum_y P(y|x) F_x(y)``."""
    probs = P.probs if isinstance(P, CcpTable) else np.asarray(P)
    return np.einsum("xa,axz->xz", probs, model.F)


def valuation(model: DiscreteModel, params, P, include_euler=True) -> ValueVector:
    """Values implied by following CCPs ``P`` forever.

    Solves ``V = sum_y P(y) (H(y) theta + e - ln P(y)) + beta M V`` directly,
    where ``e`` is Euler's constant when ``include_euler`` is set. Without
    it the result is on the scale of :func:`solve_bellman`, which reports
    ``ln sum exp`` of the action values.
    """
    pay = as_payoff(params)
    probs = P.probs if isinstance(P, CcpTable) else np.asarray(P, dtype=float)
    _check_ccp(probs)
    shift = EULER if include_euler else 0.0
    u = (probs * (model.flow(pay.theta) + shift - np.log(probs))).sum(axis=1)
    if pay.beta == 0.0:
        return ValueVector(u - u[0], float(u[0]), 0.0)
    h, g = _bordered_solve(induced_chain(model, probs), u, pay.beta)
    return ValueVector(h, g, pay.beta)


def _bellman_relative(model, pay, rel):
    """Apply the integrated Bellman operator to ``rel`` (relative form)."""
    return logsumexp(_action_values(model, pay, rel), axis=1)


def solve_bellman(model: DiscreteModel, params, method="newton", tol=1e-10,
                  max_iter=100_000, rvi_sweeps=25) -> ValueVector:
    """Fixed point of ``V = ln sum_y exp(H(y) theta + beta F_x(y) V)``.

    ``method``:

    ``"newton"``
        a few relative value-iteration sweeps followed by Newton steps
        (policy iteration on the smoothed operator); quadratic convergence.
    ``"relative"``
        relative value iteration only.
    ``"plain"``
        successive approximation on the levels; practical only for modest
        discount factors.

    Convergence is declared when the sup-norm Bellman residual falls below
    ``tol``; the residual is evaluated in relative form, i.e. on
    ``T(V) - V`` with the common level removed analytically. For values so
    large that ``tol`` is below round-off, the threshold becomes
    ``64 eps`` times their magnitude.
    """
    pay = as_payoff(params)
    n = model.n_states
    if method == "plain":
        return _plain_iteration(model, pay, tol, max_iter)
    if method not in ("newton", "relative"):
        raise ValueError(f"unknown method {method!r}")

    h = np.zeros(n)
    g = 0.0
    sweeps = max_iter if method == "relative" else min(rvi_sweeps, max_iter)
    res = np.inf
    it = 0
    for it in range(1, sweeps + 1):
        Lh = _bellman_relative(model, pay, h)
        # T(h + c) = L(h) + beta c; residual of V = h + g/(1-beta)
        res = float(np.abs(Lh - h - g).max())
        g = float(Lh[0] - h[0])
        h = Lh - Lh[0]
        if res < _effective_tol(tol, h, g):
            return _finish(model, pay, h, g, it)
    if method == "relative":
        raise ConvergenceError(f"relative value iteration stopped at residual {res:.3e}",
                               {"residual": res, "iterations": it})

    for step in range(1, 101):
        P = softmax(_action_values(model, pay, h), axis=1)
        u = (P * (model.flow(pay.theta) - np.log(np.maximum(P, 1e-300)))).sum(axis=1)
        if pay.beta == 0.0:
            h, g = u - u[0], float(u[0])
        else:
            h, g = _bordered_solve(induced_chain(model, P), u, pay.beta)
        Lh = _bellman_relative(model, pay, h)
        res = float(np.abs(Lh - h - g).max())
        log.debug("newton step %d residual %.3e", step, res)
        if res < _effective_tol(tol, h, g):
            return _finish(model, pay, h, g, it + step)
    raise ConvergenceError(f"Bellman solve stopped at residual {res:.3e}",
                           {"residual": res, "iterations": it + step})


def _effective_tol(tol, h, g):
    return max(tol, 64.0 * np.finfo(float).eps * max(1.0, float(np.abs(h).max()), abs(g)))


def _finish(model, pay, h, g, iterations):
    # one last application of T: V = L(h) + beta g / (1 - beta)
    Lh = _bellman_relative(model, pay, h)
    g_new = float(Lh[0])
    res = float(np.abs(Lh - h - g).max())
    if not np.all(np.isfinite(Lh)):
        raise ConvergenceError("non-finite values in Bellman solve", {"residual": np.inf})
    # V = Lh + beta g/(1-beta) = (Lh - Lh[0]) + (Lh[0] (1-beta) + beta g)/(1-beta)
    return ValueVector(Lh - g_new, g_new * (1.0 - pay.beta) + pay.beta * g, pay.beta,
                       iterations=iterations, residual=res)


def _plain_iteration(model, pay, tol, max_iter):
    V = np.zeros(model.n_states)
    res = np.inf
    for it in range(1, max_iter + 1):
        V_new = _bellman_relative(model, pay, V)
        res = float(np.abs(V_new - V).max())
        V = V_new
        if res < tol:
            return ValueVector(V - V[0], float(V[0]) * (1.0 - pay.beta), pay.beta,
                               iterations=it, residual=res)
    raise ConvergenceError(f"value iteration did not converge in {max_iter} sweeps "
                           f"(residual {res:.3e})", {"residual": res, "iterations": max_iter})


def value_iteration_residuals(model, params, n_sweeps):
    """Sup-norm update sizes of plain successive approximation from zero."""
    pay = as_payoff(params)
    V = np.zeros(model.n_states)
    out = np.empty(n_sweeps)
    for i in range(n_sweeps):
        V_new = _bellman_relative(model, pay, V)
        out[i] = np.abs(V_new - V).max()
        V = V_new
    return out


def solve_ccp(model: DiscreteModel, params):
    """Solve the DP and return ``(values, optimal CCPs)``."""
    V = solve_bellman(model, params)
    return V, ccp_from_values(model, params, V)


# --------------------------------------------------------------------------
# stationary distribution

def recurrent_classes(M: np.ndarray, atol=0.0) -> int:
    """Number of closed communicating classes of the chain ``M``."""
    adj = M > atol
    n_comp, lab = connected_components(adj, directed=True, connection="strong")
    closed = np.ones(n_comp, dtype=bool)
    src, dst = np.nonzero(adj)
    leaving = lab[src] != lab[dst]
    closed[np.unique(lab[src[leaving]])] = False
    return int(closed.sum())


def stationary_distribution(M: np.ndarray, tol=1e-12, max_iter=2_000_000,
                            check_every=64) -> np.ndarray:
    """Stationary law of the row-stochastic ``M`` from a uniform start.

    Power iteration on the lazy chain ``(I + M) / 2``, which has the same
    invariant law and is aperiodic; stops once ``||pi M - pi||_inf < tol``.
    """
    n = M.shape[0]
    if recurrent_classes(M) > 1:
        warnings.warn("chain has several recurrent classes; returning the limit "
                      "reached from a uniform start", RuntimeWarning, stacklevel=2)
    pi = np.full(n, 1.0 / n)
    res = np.inf
    for it in range(1, max_iter + 1):
        step = pi @ M
        if it % check_every == 0 or it == 1:
            pi = pi / pi.sum()
            step = pi @ M
            res = float(np.abs(step - pi).max())
            if res < tol:
                return pi
        pi = 0.5 * (pi + step)
    raise ConvergenceError(f"power iteration stopped at residual {res:.3e}",
                           {"residual": res, "iterations": max_iter})


def ergodic_distribution(model: DiscreteModel, P) -> np.ndarray:
    """Stationary distribution of the chain induced by CCPs ``P``."""
    return stationary_distribution(induced_chain(model, P))

