"""Run configuration: YAML file -> validated, hashable :class:`RunConfig`.

Every block is a dataclass; unknown keys are rejected with the dotted path
of the offending field. The config hash is the SHA-256 of the canonical
JSON dump of the validated config (after command-line overrides).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .errors import ConfigError
from .model_core import DAILY_BETA
from .simulator import DEFAULT_HOLIDAYS

SCHEMA_VERSION = "1"


@dataclass
class ChainConfig:
    n_stores: int = 4
    n_products: int = 2
    n_days: int = 2000
    sigma_eps: float = 1.0
    markup: float = 0.655
    manager_share: float = 0.25
    store_share: float = 0.2
    low_edu_boost: float = 1.0
    daily_sales: float = 18.0 / 7.0
    price_levels: tuple = (25.28, 22.75)
    price_switch_prob: float = 0.02
    holidays: tuple = DEFAULT_HOLIDAYS
    design_seed: int = 0


@dataclass
class ModelConfig:
    beta: float = DAILY_BETA
    n_clusters: int = 2
    k_max: int = 100
    k_step: int = 2
    y_max: int = 48
    y_step: int = 6


@dataclass
class SolverConfig:
    method: str = "newton"
    tol: float = 1e-10
    max_iter: int = 100000


@dataclass
class EstimationConfig:
    ccp_floor: float = 1e-6
    max_iter: int = 500
    tol: float = 1e-8


@dataclass
class CounterfactualConfig:
    shutdown: tuple = ("h", "z", "f", "c", "all")
    delay: bool = True
    include_shock: bool = False


@dataclass
class PathsConfig:
    input_dir: Optional[str] = None
    output_dir: str = "invdp_out"


@dataclass
class RunConfig:
    schema_version: str = SCHEMA_VERSION
    seed: int = 0
    workers: int = 1
    chain: ChainConfig = field(default_factory=ChainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    counterfactual: CounterfactualConfig = field(default_factory=CounterfactualConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    @property
    def input_dir(self) -> str:
        return self.paths.input_dir or self.paths.output_dir

    def as_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def hashed_dict(self) -> dict:
        """Fields that determine results: output locations and workers excluded."""
        d = self.as_dict()
        d.pop("paths")
        d.pop("workers")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.hashed_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def solver_options(self) -> dict:
        return {"method": self.solver.method, "tol": self.solver.tol,
                "max_iter": self.solver.max_iter}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _coerce(value, default, where):
    """Cast a YAML scalar/list to the type of the dataclass default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return tuple(value)
    if default is None or isinstance(default, str):
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported value {value!r}")


def _build(cls, data, prefix):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError("unknown config key(s): "
                          + ", ".join(f"{prefix}{k}" for k in unknown))
    obj = cls()
    for name, value in data.items():
        default = getattr(obj, name)
        where = f"{prefix}{name}"
        if dataclasses.is_dataclass(default):
            setattr(obj, name, _build(type(default), value, where + "."))
        else:
            setattr(obj, name, _coerce(value, default, where))
    return obj


def _positive(value, where):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ConfigError(f"{where} must be > 0, got {value!r}")


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.schema_version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION!r}, "
                          f"got {cfg.schema_version!r}")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if cfg.seed < 0:
        raise ConfigError("seed must be >= 0")
    m = cfg.model
    if not 0.0 < m.beta < 1.0:
        raise ConfigError(f"model.beta must lie in (0, 1), got {m.beta}")
    if m.n_clusters < 1:
        raise ConfigError("model.n_clusters must be >= 1")
    for name in ("k_max", "k_step", "y_max", "y_step"):
        _positive(getattr(m, name), f"model.{name}")
    if m.k_max % m.k_step or m.y_max % m.y_step:
        raise ConfigError("model grid maxima must be multiples of their steps")
    _positive(cfg.solver.tol, "solver.tol")
    _positive(cfg.solver.max_iter, "solver.max_iter")
    if cfg.solver.method not in ("newton", "relative", "plain"):
        raise ConfigError(f"solver.method must be newton, relative or plain, "
                          f"got {cfg.solver.method!r}")
    e = cfg.estimation
    _positive(e.ccp_floor, "estimation.ccp_floor")
    _positive(e.tol, "estimation.tol")
    _positive(e.max_iter, "estimation.max_iter")
    if e.ccp_floor >= 0.5:
        raise ConfigError("estimation.ccp_floor must be < 0.5")
    c = cfg.chain
    for name in ("n_stores", "n_products", "sigma_eps", "markup", "daily_sales"):
        _positive(getattr(c, name), f"chain.{name}")
    if c.n_days < 30:
        raise ConfigError(f"chain.n_days must be >= 30, got {c.n_days}")
    for name in ("manager_share", "store_share", "low_edu_boost"):
        if getattr(c, name) < 0:
            raise ConfigError(f"chain.{name} must be >= 0")
    if len(c.price_levels) != 2 or min(c.price_levels) <= 0:
        raise ConfigError("chain.price_levels must hold two positive prices")
    if not 0.0 <= c.price_switch_prob <= 1.0:
        raise ConfigError("chain.price_switch_prob must lie in [0, 1]")
    if any((not isinstance(h, int)) or h < 0 for h in c.holidays):
        raise ConfigError("chain.holidays must be non-negative day indices")
    bad = sorted(set(cfg.counterfactual.shutdown) - {"h", "z", "f", "c", "all"})
    if bad:
        raise ConfigError(f"counterfactual.shutdown: unknown component(s) {bad}")
    if not cfg.paths.output_dir:
        raise ConfigError("paths.output_dir must be set")
    return cfg


def load_config(path=None, overrides=None) -> RunConfig:
    """Read and validate a YAML config; ``overrides`` maps dotted keys to values."""
    data = {}
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    try:
        data = json.loads(json.dumps(data))  # detach and normalise YAML types
    except TypeError as exc:
        raise ConfigError(f"unsupported value in config: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        node = data
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return validate(_build(RunConfig, data, ""))


def dump_config(cfg: RunConfig) -> str:
    """YAML of the hashed fields; loading it back reproduces the digest."""
    return yaml.safe_dump(cfg.hashed_dict(), sort_keys=True)
