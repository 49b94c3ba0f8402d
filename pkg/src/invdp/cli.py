"""``invdp`` command-line driver.

Subcommands: ``simulate``, ``fit-demand``, ``fit-ss``, ``fit-structural``,
``counterfact`` and ``report``. Artifacts are staged in a temporary
directory next to the output directory and moved into place only when the
whole subcommand succeeds. Every CSV starts with a ``#`` provenance line
carrying the config hash and seed; JSON files carry a ``provenance`` key.

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .config import RunConfig, dump_config, load_config
from .counterfactual import (build_delayed_models, centralization_experiment,
                             decompose_costs, estimate_lag_kernels, shutdown_experiment)
from .demand_estimation import COEF_NAMES, fit_negbin
from .errors import ConfigError, InvdpError, SpecError
from .model_core import PANEL_COLUMNS, DemandParams, MarkupClass, Panel
from .reduced_form_ss import fit_ss_rule, ss_data
from .simulator import (COST_NAMES, PriceProcess, calibrated_demand, default_chain_spec,
                        synthesize_chain)
from .structural_estimation import THETA_NAMES, estimation_model, fit_panel

log = logging.getLogger("invdp")

SUBCOMMANDS = ("simulate", "fit-demand", "fit-ss", "fit-structural", "counterfact", "report")
OUTCOMES = ("stockout_frequency", "ordering_frequency", "inv_to_sales",
            "inv_to_sales_after_order", "inv_to_sales_before_order", "profit",
            "inventory_cost")
CDF_PROBS = np.round(np.arange(1, 100) / 100.0, 2)


# --------------------------------------------------------------------------
# artifact I/O

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Artifacts:
    """Writes provenance-stamped files into a staging directory."""

    def __init__(self, stage: str, cfg: RunConfig, subcommand: str):
        self.stage = stage
        self.header = f"# invdp {__version__} config_sha256={cfg.digest()} seed={cfg.seed}"
        self.provenance = {"invdp": __version__, "config_sha256": cfg.digest(),
                           "seed": cfg.seed, "subcommand": subcommand}
        self.files = []

    def csv(self, name, columns, rows):
        buf = io.StringIO()
        buf.write(self.header + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        self._write(name, buf.getvalue())

    def json(self, name, payload):
        body = {"provenance": self.provenance, **payload}
        self._write(name, json.dumps(body, sort_keys=True, indent=1, default=_json_default)
                    + "\n")

    def text(self, name, content):
        self._write(name, content)

    def _write(self, name, content):
        with open(os.path.join(self.stage, name), "w", newline="") as fh:
            fh.write(content)
        self.files.append(name)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serialisable: {type(o)}")


def read_csv(path):
    """Read a provenance-stamped CSV into ``(columns, dict of str lists)``."""
    if not os.path.isfile(path):
        raise ConfigError(f"required input not found: {path}")
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    try:
        cols = next(reader)
    except StopIteration:
        raise ConfigError(f"empty input file: {path}") from None
    data = {c: [] for c in cols}
    for row in reader:
        if len(row) != len(cols):
            raise ConfigError(f"malformed row in {path}: {row}")
        for c, v in zip(cols, row):
            data[c].append(v)
    return cols, data


def _floats(data, name):
    return np.array([float(v) for v in data[name]])


def read_panel(path) -> Panel:
    cols, data = read_csv(path)
    missing = [c for c in PANEL_COLUMNS if c not in data]
    if missing:
        raise ConfigError(f"{path}: missing panel columns {missing}")
    return Panel(**{c: _floats(data, c) for c in PANEL_COLUMNS})


def _split_panel(panel: Panel) -> dict:
    """Panels per (store, product), in sorted key order."""
    out = {}
    keys = np.unique(np.column_stack([panel.store_id, panel.product_id]), axis=0)
    for s, p in keys:
        sub = panel.select((panel.store_id == s) & (panel.product_id == p))
        order = np.argsort(sub.day, kind="stable")
        out[(int(s), int(p))] = sub.select(order)
    return out


def _panel_rows(panel: Panel):
    cols = [getattr(panel, c) for c in PANEL_COLUMNS]
    return zip(*cols)


def read_demand(path) -> dict:
    _, data = read_csv(path)
    out = {}
    for i in range(len(data["store_id"])):
        key = (int(data["store_id"][i]), int(data["product_id"][i]))
        f = {n: float(data[n][i]) for n in COEF_NAMES}
        out[key] = DemandParams(eta0=(f["weekend"], f["holiday"], f["intercept"]),
                                eta_p=f["log_price"], eta_Q=f["log_trailing"],
                                alpha=f["alpha"])
    return out


def _tagged(exc, key):
    """Same error class, message prefixed with the store-product."""
    new = type(exc).__new__(type(exc))
    new.__dict__.update(exc.__dict__)
    new.args = (f"store {key[0]} product {key[1]}: {exc}",)
    return new


def _pmap(fn, items, workers):
    """Order-preserving map; results never depend on completion order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# --------------------------------------------------------------------------
# subcommands

def _chain_spec(cfg: RunConfig):
    c = cfg.chain
    demand = tuple(calibrated_demand(daily_mean=c.daily_sales, price=c.price_levels[0],
                                     holidays=c.holidays) for _ in range(c.n_products))
    return default_chain_spec(
        n_stores=c.n_stores, n_products=c.n_products, seed=c.design_seed,
        manager_share=c.manager_share, store_share=c.store_share,
        low_edu_boost=c.low_edu_boost, n_days=c.n_days, sigma_eps=c.sigma_eps,
        demand=demand, markup=c.markup,
        price=PriceProcess(levels=tuple(c.price_levels), switch_prob=c.price_switch_prob),
        holidays=tuple(c.holidays))


def cmd_simulate(cfg: RunConfig, out: Artifacts):
    spec = _chain_spec(cfg)
    chain = synthesize_chain(spec, seed=cfg.seed, workers=cfg.workers)
    rows = []
    for key in sorted(chain.panels):
        rows.extend(_panel_rows(chain.panels[key]))
    out.csv("panels.csv", PANEL_COLUMNS, rows)
    cols = ["store_id", "product_id"] + [f"{n}_sto" for n in COST_NAMES] \
        + [f"{n}_man" for n in COST_NAMES] + list(COST_NAMES) + ["sigma_eps"]
    trows = []
    for i in range(spec.n_stores):
        for j in range(spec.n_products):
            g = chain.gamma_sto[i, j] + chain.gamma_man[i, j]
            trows.append([i, j, *chain.gamma_sto[i, j], *chain.gamma_man[i, j], *g,
                          spec.sigma_eps])
    out.csv("truth_costs.csv", cols, trows)
    st = chain.stores
    out.csv("stores.csv", ["store_id", "store_class", "log_assortment", "log_population",
                           "log_income", "region"],
            zip(st["store_id"], st["store_class"], st["log_assortment"],
                st["log_population"], st["log_income"], st["region"]))
    mg = chain.managers
    out.csv("managers.csv", ["store_id", "education", "years_lcbo", "years_other"],
            zip(mg["store_id"], mg["education"], mg["years_lcbo"], mg["years_other"]))
    out.csv("demand_truth.csv", ["product_id", *COEF_NAMES],
            [[j, *d.coef, d.alpha] for j, d in enumerate(spec.demand)])


def cmd_fit_demand(cfg: RunConfig, out: Artifacts):
    panels = _split_panel(read_panel(os.path.join(cfg.input_dir, "panels.csv")))

    def fit(key):
        try:
            return fit_negbin(panels[key], max_iter=cfg.estimation.max_iter,
                              gtol=cfg.estimation.tol)
        except InvdpError as exc:
            raise _tagged(exc, key) from exc

    fits = _pmap(fit, sorted(panels), cfg.workers)
    cols = ["store_id", "product_id", "n_obs", *COEF_NAMES,
            *[f"se_{n}" for n in COEF_NAMES], "loglik", "pseudo_r2"]
    rows = [[k[0], k[1], f.n_obs, *f.estimates, *f.se, f.loglik, f.pseudo_r2]
            for k, f in zip(sorted(panels), fits)]
    out.csv("demand_estimates.csv", cols, rows)


def _inputs_with_demand(cfg: RunConfig):
    panel_path = os.path.join(cfg.input_dir, "panels.csv")
    demand_path = os.path.join(cfg.input_dir, "demand_estimates.csv")
    for p in (panel_path, demand_path):
        if not os.path.isfile(p):
            raise ConfigError(f"required input not found: {p}")
    panels = _split_panel(read_panel(panel_path))
    demand = read_demand(demand_path)
    missing = sorted(set(panels) - set(demand))
    if missing:
        raise ConfigError(f"no demand estimates for store-products {missing}")
    return panels, demand


def cmd_fit_ss(cfg: RunConfig, out: Artifacts):
    panels, demand = _inputs_with_demand(cfg)

    def fit(key):
        try:
            return fit_ss_rule(ss_data(panels[key], demand[key]))
        except InvdpError as exc:
            raise _tagged(exc, key) from exc

    keys = sorted(panels)
    fits = _pmap(fit, keys, cfg.workers)
    lower = ("b0", "bk", "bd", "bp")
    thr = ("s_const", "s_log_de", "s_log_p")
    upper = ("S_const", "S_log_de", "S_log_p", "S_mills")
    cols = ["store_id", "product_id", *lower, *[f"se_{n}" for n in lower], "sigma_us",
            *thr, *[f"se_{n}" for n in thr], *upper, *[f"se_{n}" for n in upper]]
    rows = [[k[0], k[1], *f.lower, *f.lower_se, f.sigma_us, *f.beta_lower,
             *f.beta_lower_se, *f.upper, *f.upper_se] for k, f in zip(keys, fits)]
    out.csv("ss_estimates.csv", cols, rows)


def _grids(cfg: RunConfig):
    m = cfg.model
    return (np.arange(0, m.k_max + 1, m.k_step, dtype=np.int64),
            np.arange(0, m.y_max + 1, m.y_step, dtype=np.int64))


def _model_for(cfg, panel, demand):
    k_grid, y_grid = _grids(cfg)
    lerner = MarkupClass(cfg.chain.markup).lerner
    return estimation_model(panel, demand, lerner, cfg.model.n_clusters, cfg.seed,
                            k_grid, y_grid)


def cmd_fit_structural(cfg: RunConfig, out: Artifacts):
    panels, demand = _inputs_with_demand(cfg)
    e = cfg.estimation

    def fit(key):
        try:
            model = _model_for(cfg, panels[key], demand[key])
            return fit_panel(panels[key], model, cfg.model.beta, e.ccp_floor, e.max_iter,
                             e.tol)
        except InvdpError as exc:
            raise _tagged(exc, key) from exc

    keys = sorted(panels)
    fits = _pmap(fit, keys, cfg.workers)
    cols = ["store_id", "product_id", "n_obs", *[f"theta_{n}" for n in THETA_NAMES],
            *[f"se_theta_{n}" for n in THETA_NAMES], *COST_NAMES,
            *[f"se_{n}" for n in COST_NAMES], "sigma_eps", "loglik", "grad_norm"]
    rows = [[k[0], k[1], f.n_obs, *f.theta, *f.theta_se, *f.costs, *f.costs_se,
             f.sigma_eps, f.loglik, f.grad_norm] for k, f in zip(keys, fits)]
    out.csv("structural_estimates.csv", cols, rows)


def _table(cfg, name):
    return read_csv(os.path.join(cfg.input_dir, name))[1]


def cmd_counterfact(cfg: RunConfig, out: Artifacts):
    panels, demand = _inputs_with_demand(cfg)
    est = _table(cfg, "structural_estimates.csv")
    st, mg = _table(cfg, "stores.csv"), _table(cfg, "managers.csv")
    store_id = np.array([int(v) for v in est["store_id"]])
    product_id = np.array([int(v) for v in est["product_id"]])
    gamma_hat = np.column_stack([_floats(est, n) for n in COST_NAMES])
    sigma = _floats(est, "sigma_eps")
    stores = {"store_class": np.array(st["store_class"]),
              "region": np.array([int(v) for v in st["region"]]),
              **{k: _floats(st, k) for k in ("log_assortment", "log_population",
                                             "log_income")}}
    managers = {"education": np.array([int(v) for v in mg["education"]]),
                **{k: _floats(mg, k) for k in ("years_lcbo", "years_other")}}
    for d, name in ((stores, "stores.csv"), (managers, "managers.csv")):
        ids = np.array([int(v) for v in (st if d is stores else mg)["store_id"]])
        if not np.array_equal(ids, np.arange(len(ids))) or store_id.max() >= len(ids):
            raise ConfigError(f"{name} must list store_id 0..n-1 covering all estimates")
    dec = decompose_costs(store_id, product_id, gamma_hat, stores, managers)

    out.csv("decomposition.csv",
            ["store_id", "product_id", *[f"{n}_hat" for n in COST_NAMES],
             *[f"{n}_sto" for n in COST_NAMES], *[f"{n}_man" for n in COST_NAMES]],
            [[store_id[r], product_id[r], *gamma_hat[r], *dec.gamma_sto[r],
              *dec.gamma_man[r]] for r in range(len(store_id))])
    reg_rows = []
    for step, regs in (("store", dec.first_step), ("manager", dec.second_step),
                       ("abs_residual", dec.dispersion)):
        for name, r in zip(COST_NAMES, regs):
            for rn, b, s in zip(r.names, r.coef, r.se):
                reg_rows.append([step, name, rn, b, s, r.r2])
    out.csv("decomposition_regressions.csv",
            ["step", "parameter", "regressor", "coef", "se", "r2"], reg_rows)

    solver = cfg.solver_options()
    cf = cfg.counterfactual
    whiches = list(cf.shutdown)

    def run(r):
        key = (int(store_id[r]), int(product_id[r]))
        try:
            model = _model_for(cfg, panels[key], demand[key])
            lerner = model.info["lerner"]
            kw = dict(sigma_eps=float(sigma[r]), beta=cfg.model.beta,
                      include_shock=cf.include_shock, solver=solver)
            shut = [shutdown_experiment(model, dec.gamma_sto[r], dec.gamma_man[r],
                                        which=("all" if w == "all" else (w,)), **kw)
                    for w in whiches]
            delayed = None
            if cf.delay:
                lagk = estimate_lag_kernels(panels[key], model.space)
                delayed = build_delayed_models(model.space, model.info["exo"], lagk,
                                               demand[key], lerner)
            cen = centralization_experiment(model, dec.gamma_sto[r], dec.gamma_man[r],
                                            delayed=delayed, delay=cf.delay, **kw)
            return key, shut, cen
        except InvdpError as exc:
            raise _tagged(exc, key) from exc

    results = _pmap(run, range(len(store_id)), cfg.workers)
    results.sort(key=lambda t: t[0])
    t9_cols = ["store_id", "product_id", "shutdown",
               *[f"factual_{o}" for o in OUTCOMES], *[f"counterfactual_{o}" for o in OUTCOMES],
               *[f"delta_{o}" for o in OUTCOMES], "cost_change_pct", "profit_change_pct"]
    t9, t10, details = [], [], []
    for key, shut, cen in results:
        for w, s in zip(whiches, shut):
            f, c = s.factual.as_dict(), s.counterfactual.as_dict()
            t9.append([*key, w, *[f[o] for o in OUTCOMES], *[c[o] for o in OUTCOMES],
                       *[s.deltas[o] for o in OUTCOMES], s.cost_change_pct,
                       s.profit_change_pct])
        t10.append([*key, cen.centralized_profit, cen.decentralized_profit, cen.gain_pct,
                    cen.inventory_cost_change_pct])
        details.append({"store_id": key[0], "product_id": key[1],
                        "centralized": cen.centralized.as_dict(),
                        "decentralized": cen.decentralized.as_dict(),
                        "shutdown": {w: {"factual": s.factual.as_dict(),
                                         "counterfactual": s.counterfactual.as_dict()}
                                     for w, s in zip(whiches, shut)}})
    out.csv("table9_shutdown.csv", t9_cols, t9)
    summary = []
    for w in whiches:
        sel = [r for r in t9 if r[2] == w]
        if not sel:
            continue
        arr = np.array([r[3:] for r in sel], dtype=float)
        summary.append([w, len(sel), *arr.mean(axis=0)])
    out.csv("table9_summary.csv", ["shutdown", "n", *[f"mean_{c}" for c in t9_cols[3:]]],
            summary)
    out.csv("table10_centralization.csv",
            ["store_id", "product_id", "centralized_profit", "decentralized_profit",
             "gain_pct", "inventory_cost_change_pct"], t10)
    g = np.array([r[4] for r in t10])
    out.csv("table10_summary.csv", ["n", "mean_gain_pct", "median_gain_pct",
                                    "share_negative"],
            [[len(g), g.mean(), float(np.median(g)), float(np.mean(g < 0))]])
    out.json("counterfactual_details.json", {"experiments": details,
                                             "include_shock": cf.include_shock,
                                             "delay": cf.delay})


REPORT_INPUTS = ("demand_estimates.csv", "ss_estimates.csv", "structural_estimates.csv",
                 "table9_shutdown.csv", "table10_centralization.csv")


def cmd_report(cfg: RunConfig, out: Artifacts):
    present = [n for n in REPORT_INPUTS if os.path.isfile(os.path.join(cfg.input_dir, n))]
    if not present:
        raise ConfigError(f"no estimate files to report in {cfg.input_dir}")
    summary, cdf_cols, cdf = [], [], []
    qs = (0.1, 0.25, 0.5, 0.75, 0.9)
    for name in present:
        cols, data = read_csv(os.path.join(cfg.input_dir, name))
        for c in cols:
            if c in ("store_id", "product_id", "shutdown"):
                continue
            try:
                x = _floats(data, c)
            except ValueError:
                continue
            x = x[np.isfinite(x)]
            if x.size == 0:
                continue
            summary.append([name, c, x.size, x.mean(), *np.quantile(x, qs)])
            if name == "structural_estimates.csv" and c in COST_NAMES:
                cdf_cols.append(c)
                cdf.append(np.quantile(x, CDF_PROBS))
    out.csv("report_summary.csv", ["table", "column", "n", "mean", "q10", "q25", "median",
                                   "q75", "q90"], summary)
    if cdf:
        out.csv("report_inverse_cdf.csv", ["prob", *cdf_cols],
                [[p, *col] for p, col in zip(CDF_PROBS, np.array(cdf).T)])


COMMANDS = {"simulate": cmd_simulate, "fit-demand": cmd_fit_demand, "fit-ss": cmd_fit_ss,
            "fit-structural": cmd_fit_structural, "counterfact": cmd_counterfact,
            "report": cmd_report}


# --------------------------------------------------------------------------
# driver

def run(subcommand: str, cfg: RunConfig) -> None:
    """Run one subcommand; artifacts appear in the output directory only on success."""
    out_dir = os.path.abspath(cfg.paths.output_dir)
    parent = os.path.dirname(out_dir)
    os.makedirs(parent, exist_ok=True)
    stage = tempfile.mkdtemp(prefix=".invdp-stage-", dir=parent)
    try:
        art = Artifacts(stage, cfg, subcommand)
        with threadpool_limits(limits=1):
            COMMANDS[subcommand](cfg, art)
        art.text(f"config_{subcommand}.yaml", art.header + "\n" + dump_config(cfg))
        art.json(f"manifest_{subcommand}.json", {"files": sorted(art.files)})
        os.makedirs(out_dir, exist_ok=True)
        for name in art.files:
            os.replace(os.path.join(stage, name), os.path.join(out_dir, name))
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def _setup_logging():
    level = os.environ.get("INVDP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="invdp", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--workers", type=int, help="override the worker count")
    p.add_argument("--out", help="override paths.output_dir")
    p.add_argument("--version", action="version", version=f"invdp {__version__}")
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, {"seed": args.seed, "workers": args.workers,
                                        "paths.output_dir": args.out})
    except ConfigError as exc:
        print(f"invdp: config error: {exc}", file=sys.stderr)
        return 1
    try:
        run(args.subcommand, cfg)
    except (ConfigError, SpecError) as exc:
        print(f"invdp: config error: {exc}", file=sys.stderr)
        return 1
    except (InvdpError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"invdp: numerical failure: {exc}", file=sys.stderr)
        return 2
    log.info("%s finished; artifacts in %s", args.subcommand, cfg.paths.output_dir)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
