"""Acceptance criteria 1-7 at their stated tolerances.

Each test records one PASS/FAIL line (shown in the terminal summary) and
then asserts, so an unmet criterion fails the run.
"""

import filecmp
import os
import subprocess
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest
import yaml
from scipy import stats
from scipy.special import logsumexp

from conftest import planted_demand_panel, random_model
from invdp.counterfactual import (build_delayed_models, centralization_experiment,
                                  estimate_lag_kernels, parameter_ladder, shutdown_experiment,
                                  toy_delay_instance)
from invdp.demand_estimation import fit_negbin, loglik_gradient, loglik_value
from invdp.dp_solver import (ccp_from_values, ergodic_distribution, induced_chain,
                             solve_bellman, valuation)
from invdp.model_core import DAILY_BETA, DemandParams, MarkupClass, demand_regressors
from invdp.reduced_form_ss import (PlantedSs, fit_naive_upper, fit_ss_rule, shrink,
                                   simulate_ss_agent, thresholds_at)
from invdp.simulator import (COST_NAMES, MEDIAN_COSTS, behaviour_model, default_chain_spec,
                             simulate_panel, synthesize_chain)
from invdp.structural_estimation import estimation_model, fit_panel

pytestmark = pytest.mark.slow


# --------------------------------------------------------------------------
# 1. DP fixed-point suite

def _oracle(model, theta, beta, tol=1e-15):
    V = np.zeros(model.n_states)
    flow = model.flow(theta)
    while True:
        V_new = logsumexp(flow + beta * (model.F @ V).T, axis=1)
        if np.abs(V_new - V).max() <= tol * max(1.0, np.abs(V_new).max()):
            return V_new
        V = V_new


def test_criterion_1_dp_fixed_point(acceptance):
    t0 = time.perf_counter()
    # zero payoff: V = ln|Y| / (1 - beta)
    zero_err = 0.0
    for beta in (0.9, 0.99, DAILY_BETA):
        m = random_model(0, n_states=5, n_actions=9)
        V = solve_bellman(m, (np.zeros(5), beta)).values
        zero_err = max(zero_err, np.abs(V / (np.log(9) / (1 - beta)) - 1).max())
    # brute-force oracle on random 3-state / 2-action instances
    oracle_err = psi_res = ergo_res = 0.0
    rng = np.random.default_rng(0)
    for seed in range(50):
        m = random_model(seed)
        theta = rng.normal(size=5)
        beta = 0.95
        V = solve_bellman(m, (theta, beta))
        oracle_err = max(oracle_err, np.abs(V.values - _oracle(m, theta, beta)).max())
        # psi = lambda o upsilon at the daily discount factor
        params = (theta, DAILY_BETA)
        Vd = solve_bellman(m, params)
        P = ccp_from_values(m, params, Vd)
        P2 = ccp_from_values(m, params, valuation(m, params, P, include_euler=False))
        psi_res = max(psi_res, np.abs(P2.probs - P.probs).max())
        pi = ergodic_distribution(m, P)
        ergo_res = max(ergo_res, np.abs(pi @ induced_chain(m, P) - pi).max())
    elapsed = time.perf_counter() - t0
    ok = (zero_err <= 1e-10 and oracle_err <= 1e-8 and psi_res < 1e-8 and ergo_res < 1e-10
          and elapsed < 5.0)
    acceptance(1, "DP fixed-point suite", ok,
               f"zero-payoff rel err {zero_err:.1e}, oracle {oracle_err:.1e}, "
               f"psi residual {psi_res:.1e}, ergodic residual {ergo_res:.1e}, "
               f"{elapsed:.2f}s")
    assert ok


# --------------------------------------------------------------------------
# 2. structural recovery

N_REPS, T_STRUCT = 50, 20_000
MEDIANS = np.array([MEDIAN_COSTS[n] for n in COST_NAMES])


def _fit_one(args):
    panel, seed = args
    from threadpoolctl import threadpool_limits
    with threadpool_limits(1):
        t0 = time.process_time()
        demand = fit_negbin(panel).params
        model = estimation_model(panel, demand, MarkupClass(0.655).lerner, seed=seed)
        fit = fit_panel(panel, model)
        return fit.theta, fit.costs, fit.costs_se, time.process_time() - t0


def test_criterion_2_structural_recovery(acceptance, calibrated, median_params):
    demand, markup, price, beh = calibrated
    t0 = time.perf_counter()
    cv = beh.choice_values(median_params)
    panels = [simulate_panel(median_params, demand, markup, price, T_STRUCT, seed=5000 + r,
                             behaviour=beh, choice_values=cv) for r in range(N_REPS)]
    workers = min(8, os.cpu_count() or 1)
    with ProcessPoolExecutor(workers) as ex:
        out = list(ex.map(_fit_one, [(p, r) for r, p in enumerate(panels)]))
    elapsed = time.perf_counter() - t0
    theta = np.array([o[0] for o in out])
    costs = np.array([o[1] for o in out])
    se = np.array([o[2] for o in out])
    cpu = np.array([o[3] for o in out])
    rel = np.abs(costs / MEDIANS - 1)
    f_ok, h_ok = np.mean(rel[:, 2] <= 0.15), np.mean(rel[:, 0] <= 0.15)
    t_z = np.median(np.abs(costs[:, 1] / se[:, 1]))
    # sigma-units (theta_j = gamma_j / sigma, sigma = 1 planted), for the record
    f_sig = np.mean(np.abs(theta[:, 3] / MEDIANS[2] - 1) <= 0.15)
    h_sig = np.mean(np.abs(theta[:, 1] / MEDIANS[0] - 1) <= 0.15)
    ok = f_ok >= 0.8 and h_ok >= 0.8 and t_z < 2 and cpu.max() <= 20 and elapsed < 1800
    acceptance(2, "structural recovery", ok,
               f"gamma_f within 15% in {f_ok:.0%}, gamma_h in {h_ok:.0%} (need 80%); "
               f"median |t_z| {t_z:.2f}; median 1/sigma estimate "
               f"{np.median(theta[:, 0]):.3f} (true 1); in sigma units gamma_f/sigma "
               f"within 15% in {f_sig:.0%}, gamma_h/sigma in {h_sig:.0%}; "
               f"max fit {cpu.max():.1f}s cpu, suite {elapsed:.0f}s on {workers} worker(s)")
    assert ok


# --------------------------------------------------------------------------
# 3. comparative statics

LADDER = np.array([0.25, 0.5, 1.0, 2.0, 4.0])
LADDERS = {"gamma_h": LADDER * MEDIAN_COSTS["gamma_h"],
           "gamma_z": np.array([-2.0, -1.0, MEDIAN_COSTS["gamma_z"], 1.0, 2.0]),
           "gamma_f": LADDER * MEDIAN_COSTS["gamma_f"],
           "gamma_c": LADDER * MEDIAN_COSTS["gamma_c"]}
# directions whose sign is stated; ordering frequency in gamma_z is ambiguous
SIGNS = {("stockout_frequency", "gamma_h"): +1, ("stockout_frequency", "gamma_f"): +1,
         ("stockout_frequency", "gamma_z"): -1,
         ("ordering_frequency", "gamma_h"): +1, ("ordering_frequency", "gamma_f"): -1,
         ("ordering_frequency", "gamma_c"): -1,
         ("inv_to_sales", "gamma_h"): -1, ("inv_to_sales", "gamma_z"): +1,
         ("inv_to_sales", "gamma_f"): -1, ("inv_to_sales", "gamma_c"): -1}


def test_criterion_3_comparative_statics(acceptance, calibrated, median_params):
    model = calibrated[3].model
    t0 = time.perf_counter()
    paths = {name: parameter_ladder(model, median_params, name, vals)
             for name, vals in LADDERS.items()}
    elapsed = time.perf_counter() - t0
    failed = []
    for (outcome, name), sign in SIGNS.items():
        x = np.array([getattr(s, outcome) for s in paths[name]])
        if not np.all(sign * np.diff(x) > 0):
            failed.append(f"{outcome}~{name} ({'+' if sign > 0 else '-'} expected, "
                          f"path {np.array2string(x, precision=5)})")
    ok = not failed and elapsed < 120
    acceptance(3, "comparative-statics signs", ok,
               f"{len(SIGNS) - len(failed)}/{len(SIGNS)} pairs monotone in the stated "
               f"direction, ladder {elapsed:.1f}s"
               + ("; failing: " + "; ".join(failed) if failed else ""))
    assert ok


# --------------------------------------------------------------------------
# 4. reduced-form suite

def test_criterion_4_reduced_form(acceptance):
    n_rep, T = 200, 5000
    cover = better = bk_neg = sig_ok = S_ok = 0
    planted0, planted6 = PlantedSs(rho=0.0), PlantedSs(rho=0.6)
    for r in range(n_rep):
        d0 = simulate_ss_agent(planted0, T, seed=r)
        rule = fit_ss_rule(d0)
        lo, hi = rule.upper[3] + np.array([-1, 1]) * 1.959963984540054 * rule.upper_se[3]
        cover += lo <= 0 <= hi
        bk_neg += rule.lower[1] < 0
        sig_ok += abs(rule.sigma_us / planted0.sigma_us - 1) <= 0.2
        th = thresholds_at(rule, 0.0, float(d0.log_p.mean()))
        S_true = np.exp(planted0.beta_S[0] + planted0.beta_S[2] * d0.log_p.mean())
        S_ok += abs(np.exp(th.log_S0) / S_true - 1) <= 0.15
        d6 = simulate_ss_agent(planted6, T, seed=10_000 + r)
        heck = fit_ss_rule(d6).upper[0]
        naive = fit_naive_upper(d6).coef[0]
        better += abs(naive - planted6.beta_S[0]) > abs(heck - planted6.beta_S[0])
    rng = np.random.default_rng(0)
    g = rng.normal(0.0, 1.0, 1000)
    se = np.full(1000, 0.6)
    s = shrink(g, se)
    ident = abs(s.var() - (g.var() - np.mean(se ** 2)))
    rates = np.array([cover, better, bk_neg, sig_ok, S_ok]) / n_rep
    ok = (rates[0] >= 0.9 and rates[1] >= 0.8 and rates[2] >= 0.99 and rates[3] >= 0.9
          and rates[4] >= 0.9 and ident < 1e-10)
    acceptance(4, "reduced-form suite", ok,
               f"Mills CI covers 0 in {rates[0]:.1%}, Heckman beats naive on beta0_S in "
               f"{rates[1]:.1%}, bk<0 in {rates[2]:.1%}, sigma_us within 20% in "
               f"{rates[3]:.1%}, S0 within 15% in {rates[4]:.1%}; shrinkage identity "
               f"error {ident:.1e}")
    assert ok


# --------------------------------------------------------------------------
# 5. demand suite

PLANTED = DemandParams(eta0=(0.3, 0.5, 1.2), eta_p=-0.6, eta_Q=0.5, alpha=0.33)


def test_criterion_5_demand(acceptance):
    grad_err = 0.0
    for seed in range(10):
        panel = planted_demand_panel(PLANTED, 500, seed)
        X = demand_regressors(panel.price, panel.trailing7, panel.weekend, panel.holiday)
        w = np.append(PLANTED.coef + np.random.default_rng(seed).normal(0, 0.05, 5),
                      np.log(0.3))
        g = loglik_gradient(w, X, panel.sales)
        fd = np.empty_like(w)
        for i in range(w.size):
            h = 1e-6 * max(1.0, abs(w[i]))
            e = np.zeros_like(w)
            e[i] = h
            fd[i] = (loglik_value(w + e, X, panel.sales)
                     - loglik_value(w - e, X, panel.sales)) / (2 * h)
        grad_err = max(grad_err, np.abs(g - fd).max() / max(1.0, np.abs(g).max()))
    poisson = DemandParams(eta0=PLANTED.eta0, eta_p=PLANTED.eta_p, eta_Q=PLANTED.eta_Q, alpha=0.0)
    pf = fit_negbin(planted_demand_panel(poisson, 20_000, 99))
    pois_ok = pf.params.alpha < 0.01 and np.all(
        np.abs(pf.params.coef - poisson.coef) < 4 * pf.se[:5])
    truth = np.append(PLANTED.coef, PLANTED.alpha)
    hits = np.zeros(6)
    n_rep = 200
    for r in range(n_rep):
        ci = fit_negbin(planted_demand_panel(PLANTED, 2000, 1000 + r)).conf_int()
        hits += (ci[:, 0] <= truth) & (truth <= ci[:, 1])
    coverage = hits / n_rep
    ok = grad_err <= 1e-6 and pois_ok and coverage.min() >= 0.9
    acceptance(5, "demand suite", ok,
               f"gradient vs finite differences {grad_err:.1e}, Poisson-limit alpha "
               f"{pf.params.alpha:.1e}, 95% CI coverage per coefficient "
               f"{np.array2string(coverage, precision=3)}")
    assert ok


# --------------------------------------------------------------------------
# 6. counterfactual suite

def _chain_experiments(n_stores=20, n_products=2, seed=1):
    spec = default_chain_spec(n_stores=n_stores, n_products=n_products, seed=seed)
    chain = synthesize_chain(spec, seed=seed, simulate=False)
    markup = MarkupClass(spec.markup)
    rows = []
    for j in range(n_products):
        beh = behaviour_model(spec.demand[j], markup, spec.price, spec.holidays, seed=j)
        delayed = build_delayed_models(beh.space, beh.exo,
                                       estimate_lag_kernels(beh.pilot, beh.space),
                                       spec.demand[j], markup.lerner)
        for i in range(n_stores):
            sto, man = chain.gamma_sto[i, j], chain.gamma_man[i, j]
            s = shutdown_experiment(beh.model, sto, man)
            c = centralization_experiment(beh.model, sto, man, delayed=delayed)
            rows.append((s.cost_change_pct, c.gain_pct, man[0], s.deltas["inv_to_sales"]))
    return np.array(rows)


def test_criterion_6_counterfactuals(acceptance, calibrated):
    model = calibrated[3].model
    sto = np.array([MEDIAN_COSTS[n] for n in COST_NAMES])
    # zero manager noise, zero delay
    shut = shutdown_experiment(model, sto, np.zeros(4))
    cen = centralization_experiment(model, sto, np.zeros(4), delay=False)
    exact = (all(v == 0.0 for v in shut.deltas.values()) and shut.cost_change_pct == 0.0
             and cen.gain_pct == 0.0)
    # information ordering on toy instances (profit including the ordering shocks)
    n_toy = 40
    full, excl = [], []
    for seed in range(n_toy):
        m, delayed, gamma = toy_delay_instance(seed)
        full.append(centralization_experiment(m, gamma, np.zeros(4), delayed=delayed,
                                              include_shock=True).gain_pct)
        excl.append(centralization_experiment(m, gamma, np.zeros(4), delayed=delayed).gain_pct)
    full, excl = np.array(full), np.array(excl)
    ordering = bool(np.all(full >= -1e-5))
    # chain with planted store and manager components
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rows = _chain_experiments()
    cost_mean, gain_mean = rows[:, 0].mean(), rows[:, 1].mean()
    rho = stats.spearmanr(rows[:, 2], rows[:, 3])[0]
    ok = exact and ordering and cost_mean < 0 and gain_mean < 0
    acceptance(6, "counterfactual suite", ok,
               f"zero-noise/zero-delay exact: {exact}; information ordering on {n_toy} "
               f"toys: min gain {full.min():.2e}% with ordering shocks (excluding them "
               f"{np.sum(excl < 0)} toys negative, min {excl.min():.3f}%); chain "
               f"all-shutdown mean inventory-cost change {cost_mean:.2f}% (paper -12.08%), "
               f"mean decentralization gain {gain_mean:.2f}% (paper -1.97%), "
               f"Spearman(d inv/sales, gamma_h man) {rho:.2f}")
    assert ok


# --------------------------------------------------------------------------
# 7. end-to-end determinism

SMALL_RUN = {"seed": 7, "chain": {"n_stores": 3, "n_products": 2, "n_days": 400},
             "model": {"k_max": 40, "y_max": 24}}
STEPS = ("simulate", "fit-demand", "fit-ss", "fit-structural", "counterfact", "report")


def _pipeline(cfg, out, workers):
    for step in STEPS:
        proc = subprocess.run([sys.executable, "-m", "invdp.cli", step, "--config", cfg,
                               "--out", str(out), "--workers", str(workers)],
                              capture_output=True, text=True)
        if proc.returncode != 0:
            raise AssertionError(f"{step} failed: {proc.stderr}")


def _tree_diff(a, b):
    cmp = filecmp.dircmp(a, b)
    names = sorted(set(os.listdir(a)) | set(os.listdir(b)))
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    return cmp.left_only + cmp.right_only + mismatch + errors


def test_criterion_7_determinism(acceptance, tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(yaml.safe_dump(SMALL_RUN))
    _pipeline(str(cfg), tmp_path / "a", workers=1)
    _pipeline(str(cfg), tmp_path / "b", workers=2)
    diff = _tree_diff(tmp_path / "a", tmp_path / "b")
    n = len(os.listdir(tmp_path / "a"))
    ok = not diff and n > 0
    acceptance(7, "end-to-end determinism", ok,
               f"{n} artifacts byte-identical across two runs (1 and 2 workers)"
               if ok else f"differing artifacts: {diff}")
    assert ok
