"""
Scoring of discovered models: complexity, coefficient error against a known
truth, derivative-space R^2 / MSE, and solver wall time.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, TypeVar

import numpy as np

from lib.utils import METRICS_COLUMNS, ParameterError, ShapeError, UndefinedMetricError

_log = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True)
class MetricsReport:
    """One row of the metrics table. Missing values stay ``None``."""
    dataset_id: str
    method: str
    gamma: int
    cei: Optional[float] = None
    train_r2: Optional[float] = None
    train_mse: Optional[float] = None
    test_r2: Optional[float] = None
    test_mse: Optional[float] = None
    train_time_s: Optional[float] = None

    def __post_init__(self):
        if self.gamma < 0:
            raise ParameterError(f"gamma must be nonnegative, got {self.gamma}")
        if self.train_mse is not None and self.train_mse < 0:
            raise ParameterError(f"train_mse must be nonnegative, got {self.train_mse}")
        if self.test_mse is not None and self.test_mse < 0:
            raise ParameterError(f"test_mse must be nonnegative, got {self.test_mse}")

    def to_row(self) -> dict:
        return {name: getattr(self, name) for name in METRICS_COLUMNS}


def _coefficients(matrix) -> np.ndarray:
    return np.asarray(getattr(matrix, "xi", matrix), dtype=float)


def complexity(xi, tol: float = 0.0) -> int:
    """Number of entries with ``|value| > tol``."""
    if tol < 0:
        raise ParameterError(f"tol must be nonnegative, got {tol}")
    return int(np.count_nonzero(np.abs(_coefficients(xi)) > tol))


def cei(predicted, truth) -> float:
    """Mean absolute entrywise coefficient difference."""
    for attr in ("term_names", "var_names"):
        a, b = getattr(predicted, attr, None), getattr(truth, attr, None)
        if a is not None and b is not None and tuple(a) != tuple(b):
            raise ShapeError(f"cannot compare models: {attr} differ")
    p, t = _coefficients(predicted), _coefficients(truth)
    if p.shape != t.shape:
        raise ShapeError(f"coefficient shapes differ: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ShapeError("cannot score empty coefficient matrices")
    return float(np.mean(np.abs(p - t)))


def _pair(predicted: np.ndarray, observed: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predicted, dtype=float)
    o = np.asarray(observed, dtype=float)
    if p.shape != o.shape:
        raise ShapeError(f"predicted {p.shape} and observed {o.shape} derivatives differ in shape")
    if p.ndim == 1:
        p, o = p[:, None], o[:, None]
    if p.ndim != 2 or p.size == 0:
        raise ShapeError(f"derivatives must be a non-empty T x K array, got {p.shape}")
    return p, o


def r_squared(predicted: np.ndarray, observed: np.ndarray) -> float:
    """1 - SS_res / SS_tot pooled over every entry; SS_tot is taken about
    each variable's own time mean."""
    p, o = _pair(predicted, observed)
    ss_tot = float(np.sum((o - o.mean(axis=0)) ** 2))
    if ss_tot == 0:
        raise UndefinedMetricError("observed derivatives have zero variance; R^2 undefined")
    ss_res = float(np.sum((p - o) ** 2))
    return 1.0 - ss_res / ss_tot


def mse(predicted: np.ndarray, observed: np.ndarray) -> float:
    p, o = _pair(predicted, observed)
    return float(np.sum((p - o) ** 2) / p.size)


def timed_fit(fit: Callable[[], T]) -> Tuple[T, float]:
    """Run ``fit`` and return its result with the elapsed monotonic time."""
    start = time.perf_counter()
    result = fit()
    elapsed = time.perf_counter() - start
    _log.debug("timed_fit: %.6fs", elapsed)
    return result, elapsed
