"""Forward simulation of daily store-product panels and synthetic chains.

Each day the manager sees ``(k, p, Q7, weekend, holiday)``, draws one
extreme-value cost shock per order size, orders the size with the largest
shocked choice value, and then demand is realised. Choice values come from
the DP solved on a discretized model of the same environment (the
*behaviour model*); demand itself uses the exact rolling 7-day mean of
sales, so the estimator's discrete state is only an approximation of the
data-generating process.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .dp_solver import (CcpTable, DiscreteModel, ExogenousKernels, StateSpace,
                        action_values, build_transitions, estimate_exogenous_kernels,
                        kmeans_1d, snap_y, solve_bellman)
from .errors import DomainError, SpecError
from .model_core import DemandParams, MarkupClass, Panel, StructuralParams

log = logging.getLogger(__name__)

DEFAULT_HOLIDAYS = (0, 45, 88, 139, 181, 216, 244, 286, 358, 359)
STORE_CLASSES = ("AAA", "AA", "A", "B", "C", "D")
COST_NAMES = ("gamma_h", "gamma_z", "gamma_f", "gamma_c")
BURN_IN = 14
WEEK = 7


@dataclass(frozen=True)
class PriceProcess:
    """Markov price process on a discrete support.

    From any level the price moves to each other level with probability
    ``switch_prob / (n - 1)``.
    """

    levels: tuple = (25.28, 22.75)
    switch_prob: float = 0.02

    def __post_init__(self):
        if len(self.levels) < 1 or min(self.levels) <= 0:
            raise DomainError("price levels must be positive")
        if not 0.0 <= self.switch_prob <= 1.0:
            raise DomainError("switch_prob must lie in [0, 1]")

    def matrix(self) -> np.ndarray:
        n = len(self.levels)
        if n == 1:
            return np.ones((1, 1))
        M = np.full((n, n), self.switch_prob / (n - 1))
        np.fill_diagonal(M, 1.0 - self.switch_prob)
        return M

    def path(self, uniforms, start=0) -> np.ndarray:
        """Level indices driven by one uniform per day."""
        cum = np.cumsum(self.matrix(), axis=1)
        out = np.empty(len(uniforms), dtype=np.int64)
        s = start
        for t, u in enumerate(uniforms):
            out[t] = s
            s = min(int(np.searchsorted(cum[s], u, side="right")), len(self.levels) - 1)
        return out


def calendar_flags(days, holidays=DEFAULT_HOLIDAYS):
    days = np.asarray(days, dtype=np.int64)
    weekend = np.isin(days % 7, (5, 6)).astype(np.int64)
    holiday = np.isin(days % 365, np.asarray(holidays, dtype=np.int64)).astype(np.int64)
    return weekend, holiday


def stationary_trailing(demand: DemandParams, price: float, n_iter=200) -> float:
    """Fixed point ``q = d_e(p, q)`` of the uncensored trailing-sales mean."""
    q = 1.0
    for _ in range(n_iter):
        q = float(demand.mean(price, q))
    return q


def calibrated_demand(daily_mean=18.0 / 7.0, price=25.28, eta_p=-0.62, eta_Q=0.52,
                      alpha=0.33, weekend=0.5, holiday=0.7, holidays=DEFAULT_HOLIDAYS):
    """Demand coefficients whose stationary mean is about ``daily_mean``."""
    seas = weekend * 2.0 / 7.0 + holiday * len(holidays) / 365.0
    c = (math.log(daily_mean) - eta_p * math.log(price)
         - eta_Q * math.log1p(daily_mean) - seas)
    return DemandParams(eta0=(weekend, holiday, c), eta_p=eta_p, eta_Q=eta_Q, alpha=alpha)


def _stream(seed, *keys):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def _gumbel(rng, shape):
    u = rng.random(shape)
    u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    return -np.log(-np.log(u))


@dataclass
class _Draws:
    price_idx: np.ndarray
    gumbel: np.ndarray
    demand_u: np.ndarray


def _draw(seed, store, product, n_days, n_actions, price: PriceProcess):
    rng = _stream(seed, store, product)
    price_u = rng.random(n_days)
    gumbel = _gumbel(rng, (n_days, n_actions))
    demand_u = rng.random(n_days)
    return _Draws(price.path(price_u), gumbel, demand_u)


def _run(choice_values, space: StateSpace, demand: DemandParams, price: PriceProcess,
         draws: _Draws, holidays, k0, q7_0, gumbel_scale=1.0):
    n_days = len(draws.demand_u)
    days = np.arange(n_days)
    weekend, holiday = calendar_flags(days, holidays)
    levels = np.asarray(price.levels, dtype=float)
    p = levels[draws.price_idx]
    eta = demand.eta0
    base = eta[0] * weekend + eta[1] * holiday + eta[2] + demand.eta_p * np.log(p)
    p_cl = space.price_cluster(p)
    exo_base = space.exo_index(p_cl, 0, weekend, holiday).astype(np.int64)
    q_stride = 4  # one step in the trailing-sales cluster
    gum = np.ascontiguousarray(draws.gumbel * gumbel_scale)
    inv, order, dem, sales, trailing = kernels.simulate_days(
        np.ascontiguousarray(choice_values, dtype=float),
        np.ascontiguousarray(space.y_grid, dtype=np.int64),
        np.ascontiguousarray(base), float(demand.eta_Q), float(demand.alpha),
        exo_base, q_stride, float(space.lnq_threshold()), space.n_k, space.k_step,
        int(space.k_grid[-1]), gum, np.ascontiguousarray(draws.demand_u),
        int(k0), np.full(7, float(q7_0)))
    return dict(day=days, inventory=inv, order=order, demand=dem, sales=sales,
                price=p, trailing7=trailing, weekend=weekend, holiday=holiday)


def _to_panel(cols, store, product, burn_in):
    keep = slice(burn_in, None)
    n = len(cols["day"][keep])
    return Panel(store_id=np.full(n, store), product_id=np.full(n, product),
                 **{k: v[keep] for k, v in cols.items()})


def heuristic_values(space: StateSpace, s_level, S_level):
    """Choice values that implement an (S, s) rule on the grid exactly."""
    a_star = np.where(space.k_grid <= s_level,
                      snap_y(np.maximum(S_level - space.k_grid, 0)) // 6, 0)
    vals = np.full((space.n_k, len(space.y_grid)), -1e6)
    vals[np.arange(space.n_k), a_star] = 0.0
    return np.tile(vals, (space.n_exo, 1))


@dataclass
class BehaviourModel:
    """Discretized environment used to generate decisions in simulation."""

    model: DiscreteModel
    space: StateSpace
    demand: DemandParams
    markup: MarkupClass
    price: PriceProcess
    holidays: tuple = DEFAULT_HOLIDAYS
    exo: Optional[ExogenousKernels] = None
    pilot: Optional[Panel] = None

    def choice_values(self, structural: StructuralParams) -> np.ndarray:
        V = solve_bellman(self.model, structural)
        if not np.all(np.isfinite(V.relative)):
            raise DomainError("non-finite values from the Bellman solve")
        return action_values(self.model, structural, V)


def behaviour_model(demand: DemandParams, markup: MarkupClass, price: PriceProcess,
                    holidays=DEFAULT_HOLIDAYS, seed=0, pilot_days=5000,
                    k0=24) -> BehaviourModel:
    """Build the DP model of an environment from a pilot (S, s) simulation.

    The pilot supplies the trailing-sales clusters and the empirical laws of
    the exogenous state; price clusters are the price levels themselves.
    """
    q_bar = stationary_trailing(demand, price.levels[0])
    pilot_space = StateSpace(price_centers=np.sort(np.asarray(price.levels, dtype=float)),
                             lnq_centers=np.array([math.log1p(q_bar)]))
    values = heuristic_values(pilot_space, s_level=5.0 * q_bar, S_level=14.0 * q_bar)
    draws = _draw(seed, 10**6, 10**6, pilot_days + BURN_IN, len(pilot_space.y_grid), price)
    cols = _run(values, pilot_space, demand, price, draws, holidays, k0, q_bar,
                gumbel_scale=0.0)
    pilot = _to_panel(cols, 0, 0, BURN_IN)
    space = StateSpace(price_centers=pilot_space.price_centers,
                       lnq_centers=kmeans_1d(np.log1p(pilot.trailing7), 2, seed))
    exo = estimate_exogenous_kernels(pilot, space)
    model = build_transitions(space, exo, demand, markup.lerner)
    return BehaviourModel(model, space, demand, markup, price, tuple(holidays), exo, pilot)


def simulate_panel(structural: StructuralParams, demand: DemandParams, markup: MarkupClass,
                   price: PriceProcess, T: int, seed: int, *, store_id=0, product_id=0,
                   holidays=DEFAULT_HOLIDAYS, k0=24, q7_0=None, burn_in=BURN_IN,
                   behaviour: Optional[BehaviourModel] = None, choice_values=None) -> Panel:
    """Simulate ``T`` post-burn-in days of one store-product.

    ``behaviour`` and ``choice_values`` may be passed to reuse a built model
    or a solved DP across replications; the result depends only on the
    arguments, never on what was cached.
    """
    if T < 1:
        raise DomainError("T must be >= 1")
    if behaviour is None:
        behaviour = behaviour_model(demand, markup, price, holidays, seed)
    if choice_values is None:
        choice_values = behaviour.choice_values(structural)
    if q7_0 is None:
        q7_0 = float(demand.mean(price.levels[0], stationary_trailing(demand, price.levels[0])))
    draws = _draw(seed, store_id, product_id, T + burn_in, len(behaviour.space.y_grid), price)
    cols = _run(choice_values, behaviour.space, demand, price, draws, holidays, k0, q7_0)
    return _to_panel(cols, store_id, product_id, burn_in)


def simulate_states(model: DiscreteModel, P, T: int, seed: int, x0=0):
    """Sample ``T`` (state, action) pairs from a discrete model under CCPs ``P``."""
    probs = P.probs if isinstance(P, CcpTable) else np.asarray(P)
    rng = np.random.default_rng(seed)
    cum_p = np.cumsum(probs, axis=1)
    cum_F = np.cumsum(model.F, axis=2)
    u = rng.random((T, 2))
    states = np.empty(T, dtype=np.int64)
    actions = np.empty(T, dtype=np.int64)
    x = int(x0)
    for t in range(T):
        a = min(int(np.searchsorted(cum_p[x], u[t, 0], side="right")), probs.shape[1] - 1)
        states[t], actions[t] = x, a
        x = min(int(np.searchsorted(cum_F[a, x], u[t, 1], side="right")), model.n_states - 1)
    return states, actions


# --------------------------------------------------------------------------
# synthetic chains

@dataclass
class ChainSpec:
    """A chain of stores with planted store-level and manager-level costs.

    ``store_coef[name]`` maps the store design row (see
    :func:`store_design`) to the store component of cost ``name``;
    ``product_effect[name]`` adds a per-product shift. Manager components
    are zero-mean normal with standard deviation
    ``manager_scale[name] * (1 + low_edu_boost * low_education)``.
    """

    n_stores: int
    n_products: int
    store_class: np.ndarray
    log_assortment: np.ndarray
    log_population: np.ndarray
    log_income: np.ndarray
    region: np.ndarray
    education: np.ndarray
    years_lcbo: np.ndarray
    years_other: np.ndarray
    store_coef: dict
    product_effect: dict
    manager_scale: dict
    low_edu_boost: float = 1.0
    n_days: int = 677
    sigma_eps: float = 1.0
    demand: tuple = ()
    markup: float = 0.655
    price: PriceProcess = field(default_factory=PriceProcess)
    holidays: tuple = DEFAULT_HOLIDAYS
    max_resample: int = 200

    def __post_init__(self):
        if self.n_days < 30:
            raise SpecError("n_days must be >= 30")
        for name in ("store_class", "log_assortment", "log_population", "log_income",
                     "region", "education", "years_lcbo", "years_other"):
            if len(getattr(self, name)) != self.n_stores:
                raise SpecError(f"{name} must have one entry per store")
        if not self.demand:
            self.demand = tuple(calibrated_demand() for _ in range(self.n_products))
        if len(self.demand) != self.n_products:
            raise SpecError("demand must hold one DemandParams per product")


N_REGIONS = 3
EDUCATION_LEVELS = ("high_school", "college", "graduate")


def store_design(spec: ChainSpec) -> np.ndarray:
    """Store covariate matrix: intercept, class dummies (AAA omitted),
    log assortment, log population, log income, region dummies (0 omitted)."""
    cls = np.asarray(spec.store_class)
    cols = [np.ones(spec.n_stores)]
    cols += [(cls == c).astype(float) for c in STORE_CLASSES[1:]]
    cols += [spec.log_assortment, spec.log_population, spec.log_income]
    cols += [(np.asarray(spec.region) == r).astype(float) for r in range(1, N_REGIONS)]
    return np.column_stack(cols)


# cross-store medians of the calibrated costs
MEDIAN_COSTS = {"gamma_h": 0.0036, "gamma_z": 0.0219, "gamma_f": 2.9658, "gamma_c": 0.0341}


def default_chain_spec(n_stores=40, n_products=2, seed=0, manager_share=0.25,
                       store_share=0.2, **kw) -> ChainSpec:
    """Random store/manager covariates with costs centred on the calibrated
    medians.

    Store slopes are scaled so the store component has cross-store standard
    deviation ``store_share * median``; ``manager_share * median`` is the
    manager-noise scale for well-educated managers.
    """
    rng = _stream(seed, 7, 7)
    store_class = rng.choice(STORE_CLASSES, size=n_stores)
    log_assort = rng.normal(7.5, 0.5, n_stores)
    log_pop = rng.normal(10.0, 1.0, n_stores)
    log_inc = rng.normal(10.8, 0.2, n_stores)
    region = rng.integers(0, N_REGIONS, n_stores)
    education = rng.integers(0, len(EDUCATION_LEVELS), n_stores)
    years_lcbo = rng.uniform(1.0, 30.0, n_stores)
    years_other = rng.uniform(0.0, 15.0, n_stores)
    spec_kw = dict(n_stores=n_stores, n_products=n_products, store_class=store_class,
                   log_assortment=log_assort, log_population=log_pop,
                   log_income=log_inc, region=region, education=education,
                   years_lcbo=years_lcbo, years_other=years_other)
    X = store_design(_Covariates(**spec_kw))
    coef, prod, scale = {}, {}, {}
    for name, med in MEDIAN_COSTS.items():
        w = rng.normal(0.0, 1.0, X.shape[1] - 1)
        s = X[:, 1:] @ w
        w *= store_share * abs(med) / s.std()
        coef[name] = np.concatenate(([med - (X[:, 1:] @ w).mean()], w))
        prod[name] = np.concatenate(([0.0], rng.normal(0.0, 0.1 * abs(med), n_products - 1)))
        scale[name] = manager_share * abs(med)
    return ChainSpec(**spec_kw, store_coef=coef, product_effect=prod,
                     manager_scale=scale, **kw)


@dataclass
class _Covariates:
    n_stores: int
    n_products: int
    store_class: np.ndarray
    log_assortment: np.ndarray
    log_population: np.ndarray
    log_income: np.ndarray
    region: np.ndarray
    education: np.ndarray
    years_lcbo: np.ndarray
    years_other: np.ndarray


@dataclass
class Chain:
    """Output of :func:`synthesize_chain`.

    ``gamma_sto`` and ``gamma_man`` have shape ``(n_stores, n_products, 4)``
    in the order of :data:`COST_NAMES`.
    """

    spec: ChainSpec
    stores: dict
    managers: dict
    gamma_sto: np.ndarray
    gamma_man: np.ndarray
    panels: dict = field(default_factory=dict)
    behaviour: dict = field(default_factory=dict)

    def params(self, store, product, manager=True) -> StructuralParams:
        g = self.gamma_sto[store, product] + (self.gamma_man[store, product] if manager else 0)
        return StructuralParams(*map(float, g), sigma_eps=self.spec.sigma_eps)


def manager_noise_scale(spec: ChainSpec) -> np.ndarray:
    """Per-store standard deviation multiplier of the manager component."""
    low = (np.asarray(spec.education) == 0).astype(float)
    return 1.0 + spec.low_edu_boost * low


def synthesize_chain(spec: ChainSpec, seed: int, simulate=True, workers=1) -> Chain:
    """Draw planted costs for every store-product and simulate the panels.

    Draws violating ``gamma_h, gamma_f, gamma_c >= 0`` are redrawn; a spec
    whose store components are already negative raises :class:`SpecError`.
    """
    X = store_design(spec)
    rng = _stream(seed, 9, 9)
    ns, npr = spec.n_stores, spec.n_products
    sto = np.empty((ns, npr, 4))
    for c, name in enumerate(COST_NAMES):
        sto[:, :, c] = (X @ spec.store_coef[name])[:, None] + spec.product_effect[name][None, :]
    nonneg = np.array([True, False, True, True])
    if np.any(sto[:, :, nonneg] < 0):
        raise SpecError("store components imply negative costs")
    mult = manager_noise_scale(spec)
    scale = np.array([spec.manager_scale[n] for n in COST_NAMES])
    man = np.zeros((ns, npr, 4))
    if np.any(scale > 0):
        for i in range(ns):
            for j in range(npr):
                for _ in range(spec.max_resample):
                    draw = rng.normal(0.0, 1.0, 4) * scale * mult[i]
                    if np.all(sto[i, j, nonneg] + draw[nonneg] >= 0):
                        man[i, j] = draw
                        break
                else:
                    raise SpecError(f"could not draw feasible costs for store {i}, "
                                    f"product {j}")
    stores = dict(store_id=np.arange(ns), store_class=np.asarray(spec.store_class),
                  log_assortment=np.asarray(spec.log_assortment),
                  log_population=np.asarray(spec.log_population),
                  log_income=np.asarray(spec.log_income), region=np.asarray(spec.region))
    managers = dict(store_id=np.arange(ns), education=np.asarray(spec.education),
                    years_lcbo=np.asarray(spec.years_lcbo),
                    years_other=np.asarray(spec.years_other))
    chain = Chain(spec, stores, managers, sto, man)
    if simulate:
        markup = MarkupClass(spec.markup)
        for j in range(npr):
            chain.behaviour[j] = behaviour_model(spec.demand[j], markup, spec.price,
                                                 spec.holidays, seed=seed + j)
        jobs = [(i, j) for i in range(ns) for j in range(npr)]
        results = _map(lambda ij: simulate_panel(
            chain.params(*ij), spec.demand[ij[1]], markup, spec.price, spec.n_days, seed,
            store_id=ij[0], product_id=ij[1], holidays=spec.holidays,
            behaviour=chain.behaviour[ij[1]]), jobs, workers)
        chain.panels = dict(zip(jobs, results))
    return chain


def _map(fn, items, workers=1):
    if workers <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def ordering_frequency(panel: Panel) -> float:
    return float(np.mean(panel.order > 0))


def stockout_count(panel: Panel) -> int:
    """Days on which demand exceeded beginning-of-day stock."""
    d = panel.demand
    if np.any(d < 0):
        raise DomainError("demand is not observed in this panel")
    return int(np.sum(d > panel.inventory))

