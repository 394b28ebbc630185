"""
Sparse regression of derivatives onto the candidate library.

``stlsq`` is plain sequentially thresholded ridge regression. ``stlsq_graph``
adds a per-term, per-equation penalty ``lambda * ||f * xi||^2`` built from the
interaction graph. It is solved by rescaling: with Theta' = Theta diag(1/f_i)
and xi' = f_i * xi the problem becomes an ordinary ridge problem in xi', the
threshold loop runs on xi', and the result is mapped back as xi = xi' / f_i.

Both solvers share one column routine working on the Gram matrix, so for a
uniform f = 0.5 the graph solver with (lambda, eta) reproduces the plain
solver with (lambda / 4, 2 * eta) exactly.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from lib.graph import WeightedGraph, normalized_adjacency
from lib.library import FeatureLibrary, column_normalize, evaluate
from lib.metrics import timed_fit
from lib.oscillator import Trajectory, integrate_rk4
from lib.utils import (
    DEFAULT_ETA,
    DEFAULT_F_FLOOR,
    DEFAULT_LAMBDA,
    DEFAULT_MAX_ITERS,
    DEFAULT_PENALTY_L,
    ParameterError,
    ShapeError,
    SolverError,
    UsageError,
)

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    lam: float = DEFAULT_LAMBDA
    eta: float = DEFAULT_ETA
    max_iters: int = DEFAULT_MAX_ITERS
    L: float = DEFAULT_PENALTY_L
    f_floor: float = DEFAULT_F_FLOOR
    normalize_columns: bool = False

    def __post_init__(self):
        if not self.lam >= 0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")
        if not self.eta >= 0:
            raise ParameterError(f"eta must be >= 0, got {self.eta}")
        if int(self.max_iters) < 1:
            raise ParameterError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.L >= 0:
            raise ParameterError(f"L must be >= 0, got {self.L}")
        if not 0 < self.f_floor < 0.5:
            raise ParameterError(f"f_floor must lie in (0, 0.5), got {self.f_floor}")

    def to_dict(self) -> dict:
        return {
            "lambda": float(self.lam),
            "eta": float(self.eta),
            "L": float(self.L),
            "max_iters": int(self.max_iters),
            "f_floor": float(self.f_floor),
            "normalize_columns": bool(self.normalize_columns),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        return cls(
            lam=float(data.get("lambda", DEFAULT_LAMBDA)),
            eta=float(data.get("eta", DEFAULT_ETA)),
            L=float(data.get("L", DEFAULT_PENALTY_L)),
            max_iters=int(data.get("max_iters", DEFAULT_MAX_ITERS)),
            f_floor=float(data.get("f_floor", DEFAULT_F_FLOOR)),
            normalize_columns=bool(data.get("normalize_columns", False)),
        )


@dataclass(frozen=True)
class CoefficientMatrix:
    """Xi with C rows (library terms) and K columns (state equations)."""
    xi: np.ndarray
    term_names: Tuple[str, ...]
    var_names: Tuple[str, ...]

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float, copy=True)
        names = tuple(self.term_names)
        variables = tuple(self.var_names)
        if xi.shape != (len(names), len(variables)):
            raise ShapeError(
                f"xi has shape {xi.shape}, expected ({len(names)}, {len(variables)}) "
                "from term/variable names"
            )
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "term_names", names)
        object.__setattr__(self, "var_names", variables)

    @classmethod
    def for_library(cls, xi: np.ndarray, library: FeatureLibrary) -> "CoefficientMatrix":
        return cls(xi, tuple(library.names), tuple(library.svmap.var_names()))

    @classmethod
    def zeros(cls, library: FeatureLibrary) -> "CoefficientMatrix":
        return cls.for_library(np.zeros((len(library), library.n_vars)), library)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.xi.shape

    def support(self) -> np.ndarray:
        return self.xi != 0

    def check_library(self, library: FeatureLibrary) -> None:
        if list(self.term_names) != library.names:
            raise ShapeError("model terms do not match the library's term order")
        if list(self.var_names) != library.svmap.var_names():
            raise ShapeError("model variables do not match the library's state map")

    def equations(self, precision: int = 5) -> List[str]:
        """One ``d<var>/dt = ...`` line per state variable, zero terms omitted."""
        lines = []
        for k, var in enumerate(self.var_names):
            parts = []
            for j, name in enumerate(self.term_names):
                c = self.xi[j, k]
                if c == 0:
                    continue
                coef = f"{abs(c):.{precision}g}"
                body = coef if name == "1" else f"{coef} {name}"
                if not parts:
                    parts.append(f"-{body}" if c < 0 else body)
                else:
                    parts.append(f"{'-' if c < 0 else '+'} {body}")
            lines.append(f"d{var}/dt = {' '.join(parts) if parts else '0'}")
        return lines


# ==================== PENALTY ====================

def penalty_value(m: float | np.ndarray, L: float, n_sources: int) -> float | np.ndarray:
    """Sigmoid-shaped penalty of a term with mean source-to-sink connectivity
    ``m`` and ``n_sources`` distinct source variables. f(0.5) = 0.5; strong
    connectivity drives f toward 0, none toward 1."""
    if n_sources < 1:
        raise ParameterError("penalty needs at least one source variable")
    return 1.0 / (1.0 + np.exp((L / n_sources) * (np.asarray(m, dtype=float) - 0.5)))


@dataclass(frozen=True)
class PenaltyMatrix:
    """``f[j, i]``: penalty of term j in the equation of state variable i."""
    f: np.ndarray

    def __post_init__(self):
        f = np.array(self.f, dtype=float, copy=True)
        if f.ndim != 2:
            raise ShapeError(f"penalty must be a C x K matrix, got shape {f.shape}")
        if np.any(f <= 0) or np.any(f > 1):
            raise ParameterError("penalty entries must lie in (0, 1]")
        f.setflags(write=False)
        object.__setattr__(self, "f", f)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.f.shape

    @classmethod
    def uniform(cls, n_terms: int, n_vars: int, value: float = 0.5) -> "PenaltyMatrix":
        return cls(np.full((n_terms, n_vars), value))


def compute_penalty(library: FeatureLibrary, graph: WeightedGraph,
                    config: SolverConfig) -> PenaltyMatrix:
    svmap = library.svmap
    if svmap.n_nodes != graph.n_nodes:
        raise ShapeError(
            f"library state map has {svmap.n_nodes} nodes, graph has {graph.n_nodes}"
        )
    conn = normalized_adjacency(graph)
    sink_nodes = np.array([svmap.node_of(i) for i in range(svmap.total)])
    f = np.empty((len(library), svmap.total))
    for j, term in enumerate(library.terms):
        if term.is_constant:
            f[j, :] = 0.5
            continue
        sources = sorted(term.source_nodes)
        # m[i] = mean over source nodes s of conn[s, node_of(i)]
        m = conn[np.ix_(sources, sink_nodes)].mean(axis=0)
        f[j, :] = penalty_value(m, config.L, len(term.source_vars))
    np.clip(f, config.f_floor, 1.0, out=f)
    return PenaltyMatrix(f)


def penalty_curve(ratios: Sequence[float], m_grid: Optional[Iterable[float]] = None) -> List[dict]:
    """f(m) for several sharpness ratios L/|S| (tidy rows ``ratio, m, f``)."""
    grid = np.linspace(0.0, 1.0, 101) if m_grid is None else np.asarray(list(m_grid), dtype=float)
    rows = []
    for ratio in ratios:
        if ratio < 0:
            raise ParameterError(f"penalty ratio must be >= 0, got {ratio}")
        values = penalty_value(grid, float(ratio), 1)
        rows.extend({"ratio": float(ratio), "m": float(m), "f": float(v)} for m, v in zip(grid, values))
    return rows


# ==================== RIDGE / STLSQ ====================

def _ridge_from_gram(gram: np.ndarray, rhs: np.ndarray, lam: float,
                     support: np.ndarray) -> np.ndarray:
    active = np.nonzero(support)[0]
    coef = np.zeros(gram.shape[0])
    if active.size == 0:
        return coef
    a = gram[np.ix_(active, active)].copy()
    a[np.diag_indices_from(a)] += lam
    try:
        factor = linalg.cho_factor(a, lower=False, check_finite=False)
    except linalg.LinAlgError as e:
        raise SolverError(
            f"ridge normal equations not positive definite on {active.size} active terms: {e}",
            "ridge system is singular; use lambda > 0" if lam == 0 else "ridge system is singular",
        ) from e
    if lam == 0:
        diag = np.abs(np.diag(factor[0]))
        if diag.min() <= np.sqrt(np.finfo(float).eps * active.size) * diag.max():
            raise SolverError(
                f"collinear active columns at lambda=0 (pivot ratio {diag.min() / diag.max():.3g})",
                "ridge system is singular; use lambda > 0",
            )
    coef[active] = linalg.cho_solve(factor, rhs[active], check_finite=False)
    return coef


def ridge_solve(theta: np.ndarray, target: np.ndarray, lam: float,
                support: Optional[np.ndarray] = None) -> np.ndarray:
    """argmin ||target - Theta_S b||^2 + lam ||b||^2 on the active columns S
    via Cholesky on the normal equations; inactive entries are zero."""
    theta = np.asarray(theta, dtype=float)
    target = np.asarray(target, dtype=float)
    if theta.ndim != 2 or target.shape != (theta.shape[0],):
        raise ShapeError(f"theta {theta.shape} and target {target.shape} do not line up")
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    support = np.ones(theta.shape[1], bool) if support is None else np.asarray(support, bool)
    if support.shape != (theta.shape[1],):
        raise ShapeError(f"support mask has shape {support.shape}, expected ({theta.shape[1]},)")
    if not support.any():
        raise ParameterError("ridge_solve needs at least one active column")
    if theta.shape[0] < support.sum():
        _log.warning("ridge_solve: %d samples for %d active terms (under-determined)",
                     theta.shape[0], int(support.sum()))
    return _ridge_from_gram(theta.T @ theta, theta.T @ target, lam, support)


def _stlsq_column(gram: np.ndarray, rhs: np.ndarray, lam: float, eta: float,
                  max_iters: int, label: str, support: Optional[np.ndarray] = None) -> np.ndarray:
    support = np.ones(gram.shape[0], bool) if support is None else support.copy()
    coef = np.zeros(gram.shape[0])
    converged = False
    for _ in range(max_iters):
        coef = _ridge_from_gram(gram, rhs, lam, support)
        kept = support & (np.abs(coef) >= eta)
        coef[~kept] = 0.0
        if not kept.any():
            _log.warning("stlsq: support for %s collapsed to empty; equation set to zero", label)
            return np.zeros_like(coef)
        if np.array_equal(kept, support):
            converged = True
            break
        support = kept
    if not converged:
        _log.debug("stlsq: %s hit max_iters=%d, refitting final support", label, max_iters)
        coef = _ridge_from_gram(gram, rhs, lam, support)
    return coef


def _check_data(theta: np.ndarray, xdot: np.ndarray, support: Optional[np.ndarray] = None
                ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    theta = np.asarray(theta, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    if xdot.ndim == 1:
        xdot = xdot[:, None]
    if theta.ndim != 2 or xdot.ndim != 2 or theta.shape[0] != xdot.shape[0]:
        raise ShapeError(f"theta {theta.shape} and xdot {xdot.shape} do not line up")
    if theta.shape[0] < theta.shape[1]:
        _log.warning("stlsq: %d samples for %d library terms (under-determined)",
                     theta.shape[0], theta.shape[1])
    if support is None:
        support = np.ones((theta.shape[1], xdot.shape[1]), bool)
    support = np.asarray(support, bool)
    if support.shape != (theta.shape[1], xdot.shape[1]):
        raise ShapeError(f"support mask has shape {support.shape}, expected {(theta.shape[1], xdot.shape[1])}")
    return theta, xdot, support


def _names(library: Optional[FeatureLibrary], n_terms: int, n_vars: int) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    if library is None:
        return tuple(f"c{j}" for j in range(n_terms)), tuple(f"v{k}" for k in range(n_vars))
    if len(library) != n_terms or library.n_vars != n_vars:
        raise ShapeError(f"library ({len(library)} terms, {library.n_vars} variables) does not match "
                         f"a {n_terms} x {n_vars} fit")
    return tuple(library.names), tuple(library.svmap.var_names())


def stlsq(theta: np.ndarray, xdot: np.ndarray, config: SolverConfig,
          library: Optional[FeatureLibrary] = None, support: Optional[np.ndarray] = None
          ) -> CoefficientMatrix:
    """Plain STLSQ. Terms and variables take ``library``'s names when given,
    else ``c<j>`` / ``v<k>``. ``support`` (C x K) restricts the starting
    active set; with eta = 0 it stays fixed."""
    theta, xdot, support = _check_data(theta, xdot, support)
    gram = theta.T @ theta
    rhs = theta.T @ xdot
    xi = np.column_stack([
        _stlsq_column(gram, rhs[:, k], config.lam, config.eta, config.max_iters, f"equation {k}",
                      support[:, k])
        for k in range(xdot.shape[1])
    ])
    return CoefficientMatrix(xi, *_names(library, *xi.shape))


def stlsq_graph(theta: np.ndarray, xdot: np.ndarray, penalty: PenaltyMatrix,
                config: SolverConfig, library: Optional[FeatureLibrary] = None,
                support: Optional[np.ndarray] = None) -> CoefficientMatrix:
    """Graph-penalized STLSQ; the threshold applies to xi' = f * xi.
    ``library`` and ``support`` work as in ``stlsq``."""
    theta, xdot, support = _check_data(theta, xdot, support)
    if penalty.shape != (theta.shape[1], xdot.shape[1]):
        raise ShapeError(f"penalty has shape {penalty.shape}, expected {(theta.shape[1], xdot.shape[1])}")
    gram = theta.T @ theta
    rhs = theta.T @ xdot
    columns = []
    for i in range(xdot.shape[1]):
        f_i = np.maximum(penalty.f[:, i], config.f_floor)
        # Theta' = Theta diag(1/f): Gram and right-hand side rescale in place of Theta.
        gram_i = gram / np.outer(f_i, f_i)
        rhs_i = rhs[:, i] / f_i
        coef_t = _stlsq_column(gram_i, rhs_i, config.lam, config.eta, config.max_iters, f"equation {i}",
                               support[:, i])
        columns.append(coef_t / f_i)
    xi = np.column_stack(columns)
    return CoefficientMatrix(xi, *_names(library, *xi.shape))


# ==================== PREDICTION / SIMULATION ====================

def predict_derivs(model: CoefficientMatrix, library: FeatureLibrary,
                   states: np.ndarray) -> np.ndarray:
    model.check_library(library)
    return evaluate(library, states) @ model.xi


def model_rhs(model: CoefficientMatrix, library: FeatureLibrary):
    model.check_library(library)
    xi = model.xi

    def rhs(state: np.ndarray) -> np.ndarray:
        return (evaluate(library, state) @ xi)[0]

    return rhs


def simulate_model(model: CoefficientMatrix, library: FeatureLibrary, x0: np.ndarray,
                   t_span: Tuple[float, float], dt: float) -> Trajectory:
    """RK4 integration of the discovered right-hand side."""
    return integrate_rk4(model_rhs(model, library), x0, t_span, dt, library.svmap)


# ==================== FITTING ====================

@dataclass(frozen=True)
class FittedModel:
    """A coefficient matrix together with how it was obtained."""
    coefficients: CoefficientMatrix
    method: str
    config: SolverConfig
    library: FeatureLibrary
    train_time: Optional[float] = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "var_names": list(self.coefficients.var_names),
            "term_names": list(self.coefficients.term_names),
            "xi": self.coefficients.xi.tolist(),
            "config": self.config.to_dict(),
            "library": {
                "max_degree": self.library.max_degree,
                "vars_per_node": self.library.svmap.vars_per_node,
            },
        }


def fit_model(method: str, library: FeatureLibrary, states: np.ndarray, derivs: np.ndarray,
              config: SolverConfig, graph: Optional[WeightedGraph] = None) -> FittedModel:
    """Evaluate the library, optionally normalize its columns, and run the
    chosen solver. Only the solver call is timed."""
    if method not in ("sindy", "sindyg"):
        raise ParameterError(f"unknown method {method!r}; expected 'sindy' or 'sindyg'")
    if method == "sindyg" and graph is None:
        raise UsageError("method 'sindyg' needs an interaction graph", "sindyg requires --graph")

    theta = evaluate(library, states)
    scales = None
    if config.normalize_columns:
        theta, scales = column_normalize(theta)

    if method == "sindy":
        coefficients, seconds = timed_fit(lambda: stlsq(theta, derivs, config, library))
    else:
        penalty = compute_penalty(library, graph, config)
        coefficients, seconds = timed_fit(lambda: stlsq_graph(theta, derivs, penalty, config, library))

    if scales is not None:
        coefficients = CoefficientMatrix.for_library(coefficients.xi / scales[:, None], library)
    _log.info("fit %s: %d active terms in %.4fs", method, int(np.count_nonzero(coefficients.xi)), seconds)
    return FittedModel(coefficients, method, config, library, seconds)
