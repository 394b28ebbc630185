"""Experiment configuration.

Values resolve in this order: command-line flags, then a flat YAML file
(``--config``), then ``SINDYG_*`` environment variables, then the built-in
defaults. The config file keys mirror the flag names; dashes and underscores
are interchangeable.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import yaml

from lib.regression import SolverConfig
from lib.utils import (
    DEFAULT_DEGREE,
    DEFAULT_DT,
    DEFAULT_EDGE_PROB,
    DEFAULT_ETA,
    DEFAULT_F_FLOOR,
    DEFAULT_IC_RANGE,
    DEFAULT_LAMBDA,
    DEFAULT_M_ATTACH,
    DEFAULT_MAX_ITERS,
    DEFAULT_N_NODES,
    DEFAULT_N_TEST,
    DEFAULT_OMEGA_RANGE,
    DEFAULT_PENALTY_L,
    DEFAULT_REPETITIONS,
    DEFAULT_SEED,
    DEFAULT_SIGMA_RANGE,
    DEFAULT_T_END,
    DEFAULT_WEIGHT_RANGE,
    SIMPLE_CASE_COUPLING,
    ParameterError,
    _require,
    parse_float_list,
    validate_range,
)

_log = logging.getLogger(__name__)

GRAPH_TYPES = ("er", "sf")
STUDIES = ("simple", "general", "custom")
SWEEP_PARAMS = ("n_nodes", "max_edge_weight", "L", "train_length")

# Config-file / flag spelling -> ExperimentConfig field.
_ALIASES = {
    "lambda": "lam",
    "penalty_l": "L",
    "l": "L",
    "t_end": "t_end",
    "train_length": "t_end",
    "reps": "reps",
    "repetitions": "reps",
    "test_length": "test_t_end",
}

# SINDYG_* environment variables that feed configuration fields.
_ENV_FIELDS = {
    "SINDYG_SEED": "seed",
    "SINDYG_OUT_DIR": "out_dir",
    "SINDYG_WORKERS": "workers",
}

_RANGE_FIELDS = ("weight_range", "sigma_range", "omega_range", "ic_range")


@dataclass(frozen=True)
class ExperimentConfig:
    # simple: three-node case; general: random-network ensembles; custom: single files
    study: str = "custom"
    # graph
    graph_type: str = "er"
    n_nodes: int = DEFAULT_N_NODES
    edge_prob: float = DEFAULT_EDGE_PROB
    m_attach: int = DEFAULT_M_ATTACH
    weight_range: Tuple[float, float] = DEFAULT_WEIGHT_RANGE
    # dynamics
    sigma_range: Tuple[float, float] = DEFAULT_SIGMA_RANGE
    omega_range: Tuple[float, float] = DEFAULT_OMEGA_RANGE
    ic_range: Tuple[float, float] = DEFAULT_IC_RANGE
    coupling: float = SIMPLE_CASE_COUPLING
    # solver
    lam: float = DEFAULT_LAMBDA
    eta: float = DEFAULT_ETA
    L: float = DEFAULT_PENALTY_L
    max_iters: int = DEFAULT_MAX_ITERS
    f_floor: float = DEFAULT_F_FLOOR
    degree: int = DEFAULT_DEGREE
    normalize_columns: bool = False
    # protocol
    t_end: float = DEFAULT_T_END
    test_t_end: Optional[float] = None
    dt: float = DEFAULT_DT
    n_test: int = DEFAULT_N_TEST
    reps: int = DEFAULT_REPETITIONS
    seed: int = DEFAULT_SEED
    out_dir: str = "results"
    workers: int = 1
    heatmap: bool = False

    def __post_init__(self):
        _require(self.study in STUDIES, f"study must be one of {STUDIES}, got {self.study!r}")
        _require(self.graph_type in GRAPH_TYPES, f"graph_type must be one of {GRAPH_TYPES}, got {self.graph_type!r}")
        _require(self.n_nodes >= 1, f"n_nodes must be >= 1, got {self.n_nodes}")
        _require(0.0 <= self.edge_prob <= 1.0, f"edge_prob must lie in [0, 1], got {self.edge_prob}")
        _require(self.m_attach >= 1, f"m_attach must be >= 1, got {self.m_attach}")
        if self.graph_type == "sf":
            _require(self.m_attach < self.n_nodes,
                     f"m_attach ({self.m_attach}) must be smaller than n_nodes ({self.n_nodes})")
        for name in _RANGE_FIELDS:
            object.__setattr__(self, name, validate_range(getattr(self, name), name,
                                                          nonnegative=name == "weight_range"))
        _require(self.coupling >= 0, f"coupling must be >= 0, got {self.coupling}")
        _require(self.degree >= 1, f"degree must be >= 1, got {self.degree}")
        _require(self.dt > 0, f"dt must be positive, got {self.dt}")
        for name in ("t_end", "test_t_end"):
            value = getattr(self, name)
            if value is None:
                continue
            _require(value > 0, f"{name} must be positive, got {value}")
            steps = value / self.dt
            _require(abs(steps - round(steps)) <= 1e-9 * max(1.0, steps),
                     f"{name}={value} is not a whole number of dt={self.dt} steps")
        _require(self.n_test >= 1, f"n_test must be >= 1, got {self.n_test}")
        _require(self.reps >= 1, f"reps must be >= 1, got {self.reps}")
        _require(self.workers >= 1, f"workers must be >= 1, got {self.workers}")
        # Surface solver problems here rather than mid-run.
        self.solver_config()

    def solver_config(self) -> SolverConfig:
        return SolverConfig(lam=self.lam, eta=self.eta, max_iters=self.max_iters, L=self.L,
                            f_floor=self.f_floor, normalize_columns=self.normalize_columns)

    @property
    def test_length(self) -> float:
        """Length of each test trajectory; defaults to the training length."""
        return self.t_end if self.test_t_end is None else self.test_t_end

    @property
    def out_path(self) -> Path:
        return Path(self.out_dir)

    def with_sweep_value(self, param: str, value: float) -> "ExperimentConfig":
        """Copy with one sweep parameter set to ``value``."""
        if param == "n_nodes":
            _require(float(value).is_integer(), f"n_nodes sweep values must be integers, got {value}")
            return replace(self, n_nodes=int(value))
        if param == "max_edge_weight":
            return replace(self, weight_range=(self.weight_range[0], float(value)))
        if param == "L":
            return replace(self, L=float(value))
        if param == "train_length":
            return replace(self, t_end=float(value), test_t_end=self.test_length)
        raise ParameterError(f"unknown sweep parameter {param!r}; expected one of {SWEEP_PARAMS}")


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
CONFIG_FIELDS = frozenset(_FIELD_TYPES)


def _field_for(key: str) -> str:
    norm = str(key).strip().replace("-", "_")
    name = _ALIASES.get(norm.lower(), norm)
    if name not in _FIELD_TYPES:
        raise ParameterError(f"unknown configuration key {key!r}")
    return name


def _coerce(name: str, value: Any) -> Any:
    """Turn a flag / YAML / env value into the field's type."""
    kind = _FIELD_TYPES[name]
    try:
        if name in _RANGE_FIELDS:
            parts = parse_float_list(value, name) if isinstance(value, str) else [float(v) for v in value]
            return tuple(parts)
        if kind == "bool":
            if isinstance(value, str):
                lowered = value.strip().lower()
                if lowered not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                    raise ValueError(value)
                return lowered in ("1", "true", "yes", "on")
            return bool(value)
        if kind == "int":
            as_float = float(value)
            if not as_float.is_integer():
                raise ValueError(value)
            return int(as_float)
        if kind in ("float", "Optional[float]"):
            return float(value)
        return str(value).strip().lower() if name in ("graph_type", "study") else str(value)
    except (TypeError, ValueError):
        raise ParameterError(f"invalid value for {name}: {value!r}")


def load_config_file(path: os.PathLike) -> Dict[str, Any]:
    """Flat YAML mapping -> ``{field: value}``."""
    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except FileNotFoundError:
        raise ParameterError(f"config file not found: {path}")
    except yaml.YAMLError as e:
        raise ParameterError(f"config file {path} is not valid YAML: {e}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ParameterError(f"config file {path} must be a flat key: value mapping")
    out: Dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, dict):
            raise ParameterError(f"config key {key!r} must not be nested")
        name = _field_for(key)
        if isinstance(value, list) and name not in _RANGE_FIELDS:
            raise ParameterError(f"config key {key!r} must be a single value")
        out[name] = _coerce(name, value)
    return out


def dump_config(config: ExperimentConfig, path: os.PathLike) -> Path:
    """Write ``config`` as a flat YAML file that ``--config`` reads back."""
    data = {}
    for f in fields(config):
        value = getattr(config, f.name)
        if value is None:
            continue
        data[f.name] = list(value) if isinstance(value, tuple) else value
    path = Path(path)
    with open(path, "w", encoding="utf-8") as out:
        yaml.safe_dump(data, out, sort_keys=False)
    return path


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    environ = os.environ if environ is None else environ
    out = {}
    for var, name in _ENV_FIELDS.items():
        raw = environ.get(var, "").strip()
        if raw:
            out[name] = _coerce(name, raw)
    return out


def resolve_config(flags: Optional[Mapping[str, Any]] = None, config_path: Optional[os.PathLike] = None,
                   environ: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    """Merge defaults < env < config file < flags. ``None`` flag values mean "not given"."""
    values: Dict[str, Any] = {}
    values.update(env_overrides(environ))
    if config_path:
        values.update(load_config_file(config_path))
    for key, value in (flags or {}).items():
        if value is None:
            continue
        name = _field_for(key)
        values[name] = _coerce(name, value)
    config = ExperimentConfig(**values)
    _log.debug("resolved config: %s", config)
    return config
