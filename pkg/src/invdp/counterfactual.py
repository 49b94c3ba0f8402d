"""Cost decomposition, ergodic outcome statistics and policy experiments.

Outcome statistics are expectations under the ergodic distribution of the
state chain induced by a CCP table. Profits and inventory costs are
evaluated with an *accounting* parameter vector that may differ from the
one generating behaviour (the store component in the experiments below).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dp_solver import (CcpTable, DiscreteModel, ExogenousKernels, StateSpace, N_CAL,
                        build_transitions, ccp_from_values, ergodic_distribution,
                        exo_demand_means, solve_bellman)
from .errors import DomainError
from .model_core import (DAILY_BETA, EULER, DemandParams, Panel, StructuralParams,
                         min_and_stockout_table, negbin_pmf_vector)

log = logging.getLogger(__name__)

COSTS = ("h", "z", "f", "c")


# --------------------------------------------------------------------------
# regressions

@dataclass(frozen=True)
class Regression:
    names: tuple
    coef: np.ndarray
    se: np.ndarray
    resid: np.ndarray
    fitted: np.ndarray
    r2: float
    dropped: tuple = ()

    def conf_int(self, z=1.959963984540054):
        return np.column_stack([self.coef - z * self.se, self.coef + z * self.se])

    def coef_of(self, name) -> float:
        return float(self.coef[self.names.index(name)])


def _independent_columns(X, tol=1e-10):
    """Indices of a maximal set of linearly independent columns (in order)."""
    keep = []
    for j in range(X.shape[1]):
        cand = keep + [j]
        if np.linalg.matrix_rank(X[:, cand], tol=tol * max(1.0, np.abs(X).max())) == len(cand):
            keep.append(j)
    return keep


def ols(y, X, names, cluster=None) -> Regression:
    """OLS with aliased columns dropped and (optionally) cluster-robust SEs.

    Cluster-robust covariances use the usual small-sample factor
    ``G/(G-1) * (N-1)/(N-K)``; without clusters the HC0 sandwich is used.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    keep = _independent_columns(X)
    dropped = tuple(n for j, n in enumerate(names) if j not in keep)
    if dropped:
        warnings.warn(f"dropping aliased regressors: {', '.join(dropped)}",
                      RuntimeWarning, stacklevel=2)
    Xk = X[:, keep]
    Q, R = np.linalg.qr(Xk)
    coef = np.linalg.solve(R, Q.T @ y)
    fitted = Xk @ coef
    resid = y - fitted
    bread = np.linalg.inv(R.T @ R)
    n, k = Xk.shape
    if cluster is None:
        meat = (Xk * resid[:, None] ** 2).T @ Xk
        factor = 1.0
    else:
        cluster = np.asarray(cluster)
        groups, inv = np.unique(cluster, return_inverse=True)
        S = np.zeros((len(groups), k))
        np.add.at(S, inv, Xk * resid[:, None])
        meat = S.T @ S
        G = len(groups)
        factor = G / max(G - 1, 1) * (n - 1) / max(n - k, 1)
    cov = factor * bread @ meat @ bread
    tss = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - (resid ** 2).sum() / tss if tss > 0 else 0.0
    return Regression(tuple(n for j, n in enumerate(names) if j in keep), coef,
                      np.sqrt(np.diag(cov)), resid, fitted, float(r2), dropped)


def store_regressors(stores: dict, store_idx):
    """Store-class dummies (first class omitted), log assortment, log
    population, log income and region dummies (first region omitted)."""
    cls = np.asarray(stores["store_class"])[store_idx]
    reg = np.asarray(stores["region"])[store_idx]
    levels = sorted(set(np.asarray(stores["store_class"]).tolist()))
    regions = sorted(set(np.asarray(stores["region"]).tolist()))
    cols, names = [], []
    for c in levels[1:]:
        cols.append((cls == c).astype(float))
        names.append(f"class_{c}")
    for key in ("log_assortment", "log_population", "log_income"):
        cols.append(np.asarray(stores[key], dtype=float)[store_idx])
        names.append(key)
    for r in regions[1:]:
        cols.append((reg == r).astype(float))
        names.append(f"region_{r}")
    return np.column_stack(cols), names


def manager_regressors(managers: dict, store_idx):
    """Education dummies (college omitted) and experience years."""
    edu = np.asarray(managers["education"])[store_idx]
    cols = [(edu == 0).astype(float), (edu == 2).astype(float),
            np.asarray(managers["years_lcbo"], dtype=float)[store_idx],
            np.asarray(managers["years_other"], dtype=float)[store_idx]]
    return np.column_stack(cols), ["edu_high_school", "edu_graduate", "years_lcbo",
                                   "years_other"]


@dataclass
class CostDecomposition:
    """``gamma_hat = gamma_sto + gamma_man`` for every (store, product) row."""

    store_id: np.ndarray
    product_id: np.ndarray
    gamma_hat: np.ndarray
    gamma_sto: np.ndarray
    gamma_man: np.ndarray
    first_step: list
    second_step: list
    dispersion: list

    @property
    def r2(self):
        return np.array([r.r2 for r in self.first_step])


def decompose_costs(store_id, product_id, gamma_hat, stores: dict, managers: dict):
    """Project estimated costs on store covariates and product dummies.

    The fitted values are the store component and the residuals the
    manager component. Residuals are then regressed on manager covariates
    (second step) and their absolute values on manager and store covariates
    (dispersion regression).
    """
    store_id = np.asarray(store_id, dtype=np.int64)
    product_id = np.asarray(product_id, dtype=np.int64)
    G = np.asarray(gamma_hat, dtype=float)
    if G.ndim == 1:
        G = G[:, None]
    Xs, sn = store_regressors(stores, store_id)
    prods = np.unique(product_id)
    Xp = np.column_stack([(product_id == p).astype(float) for p in prods[1:]]) \
        if len(prods) > 1 else np.zeros((len(store_id), 0))
    X1 = np.column_stack([np.ones(len(store_id)), Xs, Xp])
    n1 = ["const"] + sn + [f"product_{p}" for p in prods[1:]]
    Xm, mn = manager_regressors(managers, store_id)
    X2 = np.column_stack([np.ones(len(store_id)), Xm])
    n2 = ["const"] + mn
    X3 = np.column_stack([X2, Xs])
    n3 = n2 + sn
    first, second, disp = [], [], []
    sto = np.empty_like(G)
    man = np.empty_like(G)
    for c in range(G.shape[1]):
        r1 = ols(G[:, c], X1, n1, cluster=store_id)
        sto[:, c] = r1.fitted
        man[:, c] = r1.resid
        first.append(r1)
        second.append(ols(r1.resid, X2, n2, cluster=store_id))
        disp.append(ols(np.abs(r1.resid), X3, n3, cluster=store_id))
    return CostDecomposition(store_id, product_id, G, sto, man, first, second, disp)


# --------------------------------------------------------------------------
# outcome statistics

@dataclass(frozen=True)
class OutcomeStats:
    stockout_frequency: float
    ordering_frequency: float
    inv_to_sales: float
    inv_to_sales_after_order: float
    inv_to_sales_before_order: float
    profit: float
    inventory_cost: float

    def as_dict(self):
        return dict(self.__dict__)


def inventory_cost_features(model: DiscreteModel) -> np.ndarray:
    """Per (action, state) cost features ``(k, -P(d>k), 1{y>0}, y)``.

    Their inner product with ``(gh, gz, gf, gc)`` is the expected inventory
    cost, i.e. minus the non-revenue part of the flow profit.
    """
    return -model.H[:, :, 1:]


def outcome_stats(model: DiscreteModel, P, pi, accounting: StructuralParams,
                  include_shock=False) -> OutcomeStats:
    """Ergodic means of the descriptive outcomes under CCPs ``P``.

    ``include_shock`` adds the expected extreme-value surplus
    ``sigma * sum_y P (euler - ln P)`` of the accounting scale to profits.
    """
    if model.expected_sales is None:
        raise DomainError("model carries no sales information")
    probs = P.probs if isinstance(P, CcpTable) else np.asarray(P)
    pi = np.asarray(pi, dtype=float)
    order = 1.0 - probs[:, 0]
    k = model.inventory
    sales = float(pi @ model.expected_sales)
    if not sales > 0:
        raise DomainError("expected sales are zero; inventory ratios undefined")
    ordering = float(pi @ order)
    y = np.asarray(model.y_grid, dtype=float)
    if ordering > 0:
        after = float(pi @ (probs[:, 1:] @ y[1:] + order * k)) / ordering
        before = float(pi @ (order * k)) / ordering
    else:
        after = before = float("nan")
    w = accounting.dollar_weights()
    flow = (model.H @ w).T  # (states, actions)
    profit = float(pi @ (probs * flow).sum(axis=1))
    if include_shock:
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = np.where(probs > 0, probs * (EULER - np.log(probs)), 0.0).sum(axis=1)
        profit += accounting.sigma_eps * float(pi @ ent)
    cost = (inventory_cost_features(model) @ accounting.costs).T
    inv_cost = float(pi @ (probs * cost).sum(axis=1))
    return OutcomeStats(float(pi @ model.stockout), ordering, float(pi @ k) / sales,
                        after / sales, before / sales, profit, inv_cost)


def solve_outcomes(model, behaviour: StructuralParams, accounting: StructuralParams,
                   include_shock=False, solver=None):
    """Solve the DP at ``behaviour`` and return ``(P, pi, stats)``.

    ``solver`` holds keyword options for :func:`solve_bellman`.
    """
    V = solve_bellman(model, behaviour, **(solver or {}))
    P = ccp_from_values(model, behaviour, V)
    pi = ergodic_distribution(model, P)
    return P, pi, outcome_stats(model, P, pi, accounting, include_shock)


def _floor_costs(g, where=""):
    g = np.array(g, dtype=float)
    neg = np.array([True, False, True, True]) & (g < 0)
    if np.any(neg):
        warnings.warn(f"negative counterfactual costs floored at zero{where}",
                      RuntimeWarning, stacklevel=3)
        g[neg] = 0.0
    return g


def _params(g, sigma, beta):
    return StructuralParams(*map(float, g), sigma_eps=sigma, beta=beta)


@dataclass(frozen=True)
class ShutdownResult:
    factual: OutcomeStats
    counterfactual: OutcomeStats
    deltas: dict
    cost_change_pct: float
    profit_change_pct: float


def shutdown_experiment(model: DiscreteModel, gamma_sto, gamma_man, which="all",
                        sigma_eps=1.0, beta=None, include_shock=False,
                        solver=None) -> ShutdownResult:
    """Remove selected manager components and compare ergodic outcomes.

    ``which`` is one of ``h, z, f, c, all`` or an iterable of them. Deltas
    are factual minus counterfactual; percentage changes run from factual
    to counterfactual. Both regimes are costed with ``gamma_sto``.
    """
    beta = DAILY_BETA if beta is None else beta
    sel = set(COSTS) if which == "all" else set(which)
    if not sel <= set(COSTS):
        raise ValueError(f"unknown cost component in {which!r}")
    sto = np.asarray(gamma_sto, dtype=float)
    man = np.asarray(gamma_man, dtype=float)
    mask = np.array([c in sel for c in COSTS])
    acc = _params(_floor_costs(sto, " (store component)"), sigma_eps, beta)
    fact = _params(_floor_costs(sto + man), sigma_eps, beta)
    cf = _params(_floor_costs(sto + np.where(mask, 0.0, man)), sigma_eps, beta)
    _, _, f_stats = solve_outcomes(model, fact, acc, include_shock, solver)
    if np.array_equal(fact.costs, cf.costs):
        c_stats = f_stats
    else:
        _, _, c_stats = solve_outcomes(model, cf, acc, include_shock, solver)
    deltas = {k: getattr(f_stats, k) - getattr(c_stats, k) for k in f_stats.as_dict()}
    return ShutdownResult(f_stats, c_stats, deltas,
                          _pct(c_stats.inventory_cost, f_stats.inventory_cost),
                          _pct(c_stats.profit, f_stats.profit))


def _pct(new, old):
    if old == 0:
        return 0.0 if new == 0 else float("inf")
    return 100.0 * (new - old) / abs(old)


# --------------------------------------------------------------------------
# delayed information

@dataclass(frozen=True)
class LagKernels:
    """``lag_next[l, q, l']`` = P(lagged cluster tomorrow | lag l, current q);
    ``current_given_lag[l, q]`` = P(current cluster q | lagged cluster l)."""

    lag_next: np.ndarray
    current_given_lag: np.ndarray


def lagged_clusters(panel: Panel, space: StateSpace, lag=7):
    """Current and ``lag``-day-old trailing-sales clusters; -1 where unknown."""
    q = space.lnq_cluster(panel.trailing7)
    ql = np.full(len(panel), -1, dtype=np.int64)
    if len(panel) > lag:
        ok = ((panel.store_id[lag:] == panel.store_id[:-lag])
              & (panel.product_id[lag:] == panel.product_id[:-lag])
              & (panel.day[lag:] == panel.day[:-lag] + lag))
        ql[lag:] = np.where(ok, q[:-lag], -1)
    return q, ql


def estimate_lag_kernels(panel: Panel, space: StateSpace, lag=7) -> LagKernels:
    nq = space.n_q
    q, ql = lagged_clusters(panel, space, lag)
    ok = ((panel.store_id[1:] == panel.store_id[:-1])
          & (panel.product_id[1:] == panel.product_id[:-1])
          & (panel.day[1:] == panel.day[:-1] + 1)
          & (ql[1:] >= 0) & (ql[:-1] >= 0))
    cur = np.nonzero(ok)[0]
    counts = np.zeros((nq, nq, nq))
    np.add.at(counts, (ql[cur], q[cur], ql[cur + 1]), 1.0)
    marg = np.bincount(ql[ql >= 0], minlength=nq).astype(float)
    marg /= max(marg.sum(), 1.0)
    tot = counts.sum(axis=2, keepdims=True)
    if np.any(tot == 0):
        warnings.warn("empty cells in the lagged-cluster kernel; using marginal "
                      "frequencies", RuntimeWarning, stacklevel=2)
    lag_next = np.where(tot > 0, counts / np.where(tot > 0, tot, 1.0), marg)
    have = ql >= 0
    cq = np.zeros((nq, nq))
    np.add.at(cq, (ql[have], q[have]), 1.0)
    qm = np.bincount(q, minlength=nq) / len(q)
    t2 = cq.sum(axis=1, keepdims=True)
    current_given_lag = np.where(t2 > 0, cq / np.where(t2 > 0, t2, 1.0), qm)
    return LagKernels(lag_next, current_given_lag)


@dataclass
class DelayedModels:
    """The true chain with the lagged cluster appended, and the model seen
    by a planner who only observes the lagged cluster.

    Augmented exogenous index: ``((((p n_q + q) n_q + l) 2 + w) 2 + h``.
    Planner exogenous index: ``((p n_q + l) 2 + w) 2 + h``.
    """

    augmented: DiscreteModel
    planner: DiscreteModel
    base_to_aug: np.ndarray
    planner_to_aug: np.ndarray


def build_delayed_models(space: StateSpace, exo: ExogenousKernels, lagk: LagKernels,
                         demand: DemandParams, lerner: float) -> DelayedModels:
    nk, ny, nq, npr = space.n_k, len(space.y_grid), space.n_q, space.n_p
    k_max = int(space.k_grid[-1])
    d_e = exo_demand_means(space, demand)
    tab = space.exo_table()
    price = space.price_centers[tab[:, 0]]
    n_aug_exo = npr * nq * nq * N_CAL
    n_aug = n_aug_exo * nk
    n_pl = space.n_exo * nk
    F_aug = np.zeros((ny, n_aug, n_aug))
    H_aug = np.empty((ny, n_aug, 5))
    F_pl = np.zeros((ny, n_pl, n_pl))
    H_pl = np.zeros((ny, n_pl, 5))
    inv_aug = np.tile(space.k_grid.astype(float), n_aug_exo)
    sales_aug, stock_aug, price_aug = np.empty(n_aug), np.empty(n_aug), np.empty(n_aug)
    sales_pl, stock_pl = np.zeros(n_pl), np.zeros(n_pl)
    y = space.y_grid.astype(float)

    def aug_exo(p, q, l, c):
        return ((p * nq + q) * nq + l) * N_CAL + c

    def pl_exo(p, l, c):
        return (p * nq + l) * N_CAL + c

    for e in range(space.n_exo):
        p, q, w, h = tab[e]
        c = 2 * w + h
        pmf = negbin_pmf_vector(float(d_e[e]), demand.alpha)
        s_e, z_e = min_and_stockout_table(space.k_grid, pmf)
        G = kernels.accumulate_k_transitions(pmf / pmf.sum(), space.k_grid, space.y_grid,
                                             float(exo.sales_cuts[0]),
                                             float(exo.sales_cuts[1]), space.k_step, k_max)
        feats = np.empty((ny, nk, 5))
        feats[:, :, 0] = lerner * price[e] * s_e
        feats[:, :, 1] = -space.k_grid
        feats[:, :, 2] = z_e
        feats[:, :, 3] = -(y[:, None] > 0).astype(float)
        feats[:, :, 4] = -y[:, None]
        for l in range(nq):
            # next exogenous law over (p', q', l', c') given the sales tercile
            nxt = np.einsum("a,bq,l,f->baqlf",
                            exo.price_matrix[p], exo.q_kernel[q], lagk.lag_next[l, q],
                            exo.calendar_matrix[c]).reshape(3, n_aug_exo)
            rows = slice(aug_exo(p, q, l, c) * nk, (aug_exo(p, q, l, c) + 1) * nk)
            F_aug[:, rows, :] = np.einsum("iajb,bf->aifj", G, nxt).reshape(ny, nk, n_aug)
            H_aug[:, rows, :] = feats
            sales_aug[rows], stock_aug[rows], price_aug[rows] = s_e, z_e, price[e]
            # planner: integrate the current cluster given the lag
            wq = lagk.current_given_lag[l, q]
            nxt_pl = np.einsum("a,l,f->alf", exo.price_matrix[p], lagk.lag_next[l, q],
                               exo.calendar_matrix[c]).reshape(-1)
            Gb = G.sum(axis=3)  # (i, a, j)
            prow = slice(pl_exo(p, l, c) * nk, (pl_exo(p, l, c) + 1) * nk)
            F_pl[:, prow, :] += wq * np.einsum("iaj,f->aifj", Gb, nxt_pl).reshape(ny, nk, n_pl)
            H_pl[:, prow, :] += wq * feats
            sales_pl[prow] += wq * s_e
            stock_pl[prow] += wq * z_e
    F_aug /= F_aug.sum(axis=2, keepdims=True)
    F_pl /= F_pl.sum(axis=2, keepdims=True)
    augmented = DiscreteModel(F_aug, H_aug, y_grid=space.y_grid, inventory=inv_aug,
                              expected_sales=sales_aug, stockout=stock_aug, price=price_aug)
    planner = DiscreteModel(F_pl, H_pl, y_grid=space.y_grid,
                            inventory=np.tile(space.k_grid.astype(float), space.n_exo),
                            expected_sales=sales_pl, stockout=stock_pl)
    # index maps from the augmented states to base / planner states
    ae = np.arange(n_aug_exo)
    c_, rest = ae % N_CAL, ae // N_CAL
    l_, rest = rest % nq, rest // nq
    q_, p_ = rest % nq, rest // nq
    base_e = (p_ * nq + q_) * N_CAL + c_
    pl_e = (p_ * nq + l_) * N_CAL + c_
    kk = np.arange(nk)
    base_to_aug = (base_e[:, None] * nk + kk[None, :]).ravel()
    planner_to_aug = (pl_e[:, None] * nk + kk[None, :]).ravel()
    return DelayedModels(augmented, planner, base_to_aug, planner_to_aug)


@dataclass(frozen=True)
class CentralizationResult:
    centralized_profit: float
    decentralized_profit: float
    gain_pct: float
    inventory_cost_change_pct: float
    centralized: OutcomeStats = None
    decentralized: OutcomeStats = None


def centralization_experiment(model: DiscreteModel, gamma_sto, gamma_man, sigma_eps=1.0,
                              beta=None, delayed: DelayedModels = None, delay=True,
                              include_shock=False, solver=None) -> CentralizationResult:
    """Compare store-level decisions (biased costs, current information) with a
    planner who uses the store component but sees trailing sales one week late.

    ``gain_pct`` is the profit gain from decentralization relative to the
    centralized profit; both are evaluated at ``gamma_sto``. With
    ``delay=False`` the planner solves the base model.
    """
    beta = DAILY_BETA if beta is None else beta
    sto = _floor_costs(np.asarray(gamma_sto, dtype=float), " (store component)")
    acc = _params(sto, sigma_eps, beta)
    dec = _params(_floor_costs(sto + np.asarray(gamma_man, dtype=float)), sigma_eps, beta)
    _, _, dec_stats = solve_outcomes(model, dec, acc, include_shock, solver)
    if not delay:
        _, _, cen_stats = solve_outcomes(model, acc, acc, include_shock, solver)
    else:
        if delayed is None:
            raise ValueError("delayed models are required when delay=True")
        V = solve_bellman(delayed.planner, acc, **(solver or {}))
        P_pl = ccp_from_values(delayed.planner, acc, V)
        P_aug = P_pl.probs[delayed.planner_to_aug]
        pi = ergodic_distribution(delayed.augmented, P_aug)
        cen_stats = outcome_stats(delayed.augmented, P_aug, pi, acc, include_shock)
    return CentralizationResult(cen_stats.profit, dec_stats.profit,
                                _pct(dec_stats.profit, cen_stats.profit),
                                _pct(dec_stats.inventory_cost, cen_stats.inventory_cost),
                                cen_stats, dec_stats)


# --------------------------------------------------------------------------
# comparative statics and realised ratios

def parameter_ladder(model: DiscreteModel, base: StructuralParams, name: str, values):
    """Outcome statistics along a ladder of one cost parameter (accounting and
    behaviour both at the ladder value)."""
    out = []
    for v in values:
        par = base.replace(**{name: float(v)})
        out.append(solve_outcomes(model, par, par)[2])
    return out


def cost_revenue_ratios(panel: Panel, params: StructuralParams) -> dict:
    """Realised cost-to-revenue ratios over a panel.

    Stockouts are days with demand above opening stock; when demand is not
    observed they are proxied by days on which sales exhausted stock.
    """
    revenue = float(np.sum(panel.price * panel.sales))
    if not revenue > 0:
        raise DomainError("zero revenue; ratios undefined")
    if np.all(panel.demand >= 0):
        stockouts = int(np.sum(panel.demand > panel.inventory))
    else:
        stockouts = int(np.sum((panel.sales == panel.inventory) & (panel.inventory >= 0)
                               & (panel.demand != panel.sales)))
    out = {
        "holding": params.gamma_h * float(panel.inventory.sum()) / revenue,
        "stockout": params.gamma_z * stockouts / revenue,
        "fixed": params.gamma_f * int(np.sum(panel.order > 0)) / revenue,
        "variable": params.gamma_c * float(panel.order.sum()) / revenue,
    }
    out["total"] = sum(out.values())
    return out


def toy_delay_instance(seed, k_max=20, y_max=12, mean_range=(0.5, 3.0)):
    """Random small environment for information-ordering checks.

    Returns ``(model, delayed, gamma)`` where ``model`` is the base model
    built from random exogenous and lag kernels on a coarse grid.
    """
    rng = np.random.default_rng(seed)
    space = StateSpace(price_centers=np.sort(rng.uniform(10.0, 30.0, 2)),
                       lnq_centers=np.sort(rng.uniform(0.5, 3.0, 2)),
                       k_grid=np.arange(0, k_max + 1, 2), y_grid=np.arange(0, y_max + 1, 6))
    dirichlet = lambda *shape: rng.dirichlet(np.ones(shape[-1]), size=shape[:-1])
    exo = ExogenousKernels(dirichlet(2, 2) * 0.2 + 0.8 * np.eye(2), dirichlet(2, 3, 2),
                           dirichlet(4, 4), (1.0, 3.0))
    lo, hi = np.log(mean_range)
    demand = DemandParams(eta0=(rng.normal(0, 0.2), rng.normal(0, 0.2), rng.uniform(lo, hi)),
                          eta_p=-0.2, eta_Q=0.1, alpha=float(rng.uniform(0.1, 0.6)))
    lerner = float(rng.uniform(0.2, 0.5))
    lagk = LagKernels(dirichlet(2, 2, 2), dirichlet(2, 2))
    model = build_transitions(space, exo, demand, lerner)
    delayed = build_delayed_models(space, exo, lagk, demand, lerner)
    gamma = np.array([rng.uniform(0.0, 0.05), rng.normal(0.0, 0.5), rng.uniform(0.0, 5.0),
                      rng.uniform(0.0, 0.5)])
    return model, delayed, gamma
