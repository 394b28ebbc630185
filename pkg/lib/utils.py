"""
Shared constants, error hierarchy and small helpers for SINDyG Lab.
"""

from __future__ import annotations

import logging
import math
import os
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

_log = logging.getLogger(__name__)

# ==================== CONSTANTS ====================

# Solver defaults. lambda only regularizes the near-collinear directions of the
# library; larger values leave ridge residue above eta. eta is compared against
# f * xi in the graph solver, so it sits below 0.1 * f(m=1, |S|=1) at L = 10.
DEFAULT_LAMBDA = 1e-6
DEFAULT_ETA = 1e-4
DEFAULT_PENALTY_L = 10.0
DEFAULT_MAX_ITERS = 20
DEFAULT_F_FLOOR = 1e-8
DEFAULT_DEGREE = 3

# Simulation defaults.
DEFAULT_DT = 0.01
DEFAULT_T_END = 20.0
DIVERGENCE_LIMIT = 1e6
DEFAULT_SIGMA_RANGE = (0.1, 0.5)
DEFAULT_OMEGA_RANGE = (math.pi / 2, 4 * math.pi)
DEFAULT_IC_RANGE = (-1.0, 1.0)

# Three-node study: nodes 1 and 2 coupled, node 0 isolated.
SIMPLE_CASE_SIGMA = 0.2
SIMPLE_CASE_OMEGA = (math.pi / 2, math.pi, 8 * math.pi)
SIMPLE_CASE_COUPLING = 0.2

# Ensemble defaults (desk scale).
DEFAULT_REPETITIONS = 20
DEFAULT_N_TEST = 2
DEFAULT_N_NODES = 5
DEFAULT_EDGE_PROB = 0.3
DEFAULT_M_ATTACH = 2
DEFAULT_WEIGHT_RANGE = (0.05, 0.2)
DEFAULT_SEED = 0

# Full double precision for every decimal written to disk.
FLOAT_FORMAT = "%.17g"
MISSING = "n/a"

METRICS_COLUMNS = (
    "dataset_id", "method", "gamma", "cei", "train_r2", "train_mse",
    "test_r2", "test_mse", "train_time_s",
)

METHODS = ("sindy", "sindyg")


# ==================== ERROR HANDLING ====================

class SindygError(Exception):
    """Base exception. ``message`` is the log detail, ``user_message`` is the
    short line printed on the command line."""
    exit_code = 3

    def __init__(self, message: str, user_message: Optional[str] = None):
        super().__init__(message)
        self.user_message = user_message or message


class ParameterError(SindygError):
    """Invalid argument or configuration value."""
    exit_code = 1


class UsageError(SindygError):
    """Command-line contract violation."""
    exit_code = 1


class FormatError(SindygError):
    """Malformed input file. Carries the location when one is known."""
    exit_code = 2

    def __init__(self, message: str, path: Optional[os.PathLike] = None,
                 row: Optional[int] = None, column: Optional[int] = None):
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        located = f"{', '.join(where)}: {message}" if where else message
        super().__init__(located)
        self.path = path
        self.row = row
        self.column = column


class ShapeError(SindygError):
    """Dimension mismatch between arrays, libraries or models."""
    exit_code = 2


class DivergenceError(SindygError):
    """Integration produced a non-finite or runaway state."""
    exit_code = 3

    def __init__(self, time: float, detail: str = ""):
        message = f"integration diverged at t={time:.6g}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)
        self.time = time


class SolverError(SindygError):
    """The ridge normal equations could not be solved."""
    exit_code = 3


class UnrepresentableModelError(SindygError):
    """The feature library cannot express the requested model."""
    exit_code = 3


class UndefinedMetricError(SindygError):
    """A metric is mathematically undefined for the given data."""
    exit_code = 3


# ==================== VALIDATION HELPERS ====================

def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ParameterError(msg)


def validate_range(value: Sequence[float], name: str, *,
                   nonnegative: bool = False) -> Tuple[float, float]:
    """Return ``value`` as a ``(lo, hi)`` float tuple, raising ParameterError
    when it is not a finite, ordered pair."""
    _require(len(value) == 2, f"{name} must have exactly two values")
    lo, hi = float(value[0]), float(value[1])
    _require(math.isfinite(lo) and math.isfinite(hi), f"{name} must be finite")
    _require(lo <= hi, f"{name} lower bound {lo} exceeds upper bound {hi}")
    if nonnegative:
        _require(lo >= 0, f"{name} must be nonnegative")
    return lo, hi


def as_rng(seed) -> np.random.Generator:
    """Accept an int seed, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def seeded_rng(base_seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for ``(base_seed, *keys)``. Streams depend only on
    the key tuple, never on the order in which they are requested."""
    return np.random.default_rng(np.random.SeedSequence([int(base_seed), *map(int, keys)]))


# ==================== PARSING / FORMATTING ====================

def parse_float_list(raw: str | Iterable[float], name: str) -> List[float]:
    """Parse ``"0.1,0.2"`` (or an already-split iterable) into floats."""
    if isinstance(raw, str):
        parts = [p for p in (s.strip() for s in raw.split(",")) if p]
    else:
        parts = list(raw)
    try:
        return [float(p) for p in parts]
    except (TypeError, ValueError):
        raise ParameterError(f"{name} must be a comma-separated list of numbers, got {raw!r}")


def format_float(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return MISSING
    return FLOAT_FORMAT % value


def ensure_dir(path: os.PathLike) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out
