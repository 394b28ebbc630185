"""
Coupled Stuart-Landau network in real coordinates, plus the fixed-step RK4
integrator and derivative helpers shared with the model simulator.

With z_n = x_n + i y_n and k_nm = A[m, n] (weight of edge m -> n):

    dx_n = s_n x_n - w_n y_n - (x_n^2 + y_n^2) x_n + sum_m k_nm (x_n x_m - y_n y_m)
    dy_n = w_n x_n + s_n y_n - (x_n^2 + y_n^2) y_n + sum_m k_nm (x_n y_m + y_n x_m)

which is (s + i w - |z_n|^2) z_n + sum_m k_nm z_n z_m split into parts.
State layout is (x0, y0, x1, y1, ...).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from lib.graph import StateVariableMap, WeightedGraph, simple_case_graph
from lib.library import FeatureLibrary
from lib.utils import (
    DEFAULT_IC_RANGE,
    DEFAULT_OMEGA_RANGE,
    DEFAULT_SIGMA_RANGE,
    DIVERGENCE_LIMIT,
    SIMPLE_CASE_COUPLING,
    SIMPLE_CASE_OMEGA,
    SIMPLE_CASE_SIGMA,
    DivergenceError,
    ParameterError,
    ShapeError,
    UnrepresentableModelError,
    as_rng,
    validate_range,
)

_log = logging.getLogger(__name__)

Rhs = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SLParams:
    """Per-node growth rate ``sigma`` (1/time) and angular frequency
    ``omega`` (rad/time). Coupling strengths come from the graph weights."""
    sigma: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float)).copy()
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float)).copy()
        if sigma.ndim != 1 or sigma.shape != omega.shape:
            raise ShapeError(f"sigma {sigma.shape} and omega {omega.shape} must be equal-length vectors")
        if sigma.size == 0:
            raise ParameterError("SLParams needs at least one node")
        if not (np.all(np.isfinite(sigma)) and np.all(np.isfinite(omega))):
            raise ParameterError("sigma/omega must be finite")
        sigma.setflags(write=False)
        omega.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "omega", omega)

    @property
    def n_nodes(self) -> int:
        return int(self.sigma.size)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    svmap: StateVariableMap

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.states, dtype=float)
        dx = np.asarray(self.derivs, dtype=float)
        if t.ndim != 1 or x.ndim != 2 or x.shape != dx.shape or x.shape[0] != t.size:
            raise ShapeError(
                f"trajectory shapes disagree: times {t.shape}, states {x.shape}, derivs {dx.shape}"
            )
        if x.shape[1] != self.svmap.total:
            raise ShapeError(f"states have {x.shape[1]} columns, state map expects {self.svmap.total}")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ShapeError("times must be strictly increasing")

    @property
    def n_samples(self) -> int:
        return int(self.times.size)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0


@dataclass(frozen=True)
class TrueModel:
    """Ground-truth coefficients expressed in a library's term basis."""
    xi: np.ndarray
    library: FeatureLibrary


# ==================== DYNAMICS ====================

def _check_system(params: SLParams, graph: WeightedGraph) -> None:
    if params.n_nodes != graph.n_nodes:
        raise ShapeError(f"params describe {params.n_nodes} nodes, graph has {graph.n_nodes}")


def sl_rhs(state: np.ndarray, params: SLParams, graph: WeightedGraph) -> np.ndarray:
    _check_system(params, graph)
    state = np.asarray(state, dtype=float)
    if state.shape != (2 * graph.n_nodes,):
        raise ShapeError(f"state has shape {state.shape}, expected ({2 * graph.n_nodes},)")
    x = state[0::2]
    y = state[1::2]
    r2 = x * x + y * y
    # in_x[n] = sum_m A[m, n] x_m
    a_in = graph.adjacency.T
    in_x = a_in @ x
    in_y = a_in @ y
    out = np.empty_like(state)
    out[0::2] = params.sigma * x - params.omega * y - r2 * x + (x * in_x - y * in_y)
    out[1::2] = params.omega * x + params.sigma * y - r2 * y + (x * in_y + y * in_x)
    return out


def network_rhs(params: SLParams, graph: WeightedGraph) -> Rhs:
    _check_system(params, graph)
    return lambda state: sl_rhs(state, params, graph)


# ==================== INTEGRATION ====================

def _step_count(t_span: Tuple[float, float], dt: float) -> int:
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if not t1 > t0:
        raise ParameterError(f"t_span end must exceed its start, got {t_span}")
    n = int(round((t1 - t0) / dt))
    if n < 1 or abs(n * dt - (t1 - t0)) > 1e-9 * max(1.0, abs(t1 - t0)):
        raise ParameterError(f"t_span length {t1 - t0} is not a whole number of dt={dt} steps")
    return n


def _check_finite(state: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(state)):
        raise DivergenceError(t, "non-finite state")
    peak = float(np.max(np.abs(state))) if state.size else 0.0
    if peak > DIVERGENCE_LIMIT:
        raise DivergenceError(t, f"|state| reached {peak:.3g}")


def integrate_rk4(rhs: Rhs, x0: np.ndarray, t_span: Tuple[float, float], dt: float,
                  svmap: StateVariableMap | None = None) -> Trajectory:
    """Classical fixed-step RK4 on ``[t0, t1]`` including both endpoints.
    ``derivs`` holds ``rhs`` evaluated exactly at every saved state."""
    n = _step_count(t_span, dt)
    x = np.array(x0, dtype=float)
    if x.ndim != 1:
        raise ShapeError(f"x0 must be a vector, got shape {x.shape}")
    if svmap is None:
        svmap = StateVariableMap(x.size, 1) if x.size % 2 else StateVariableMap(x.size // 2, 2)
    t0 = float(t_span[0])
    times = t0 + dt * np.arange(n + 1)
    states = np.empty((n + 1, x.size))
    derivs = np.empty((n + 1, x.size))

    _check_finite(x, t0)
    half = 0.5 * dt
    for i in range(n):
        k1 = np.asarray(rhs(x), dtype=float)
        states[i] = x
        derivs[i] = k1
        k2 = rhs(x + half * k1)
        k3 = rhs(x + half * k2)
        k4 = rhs(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_finite(x, float(times[i + 1]))
    states[n] = x
    derivs[n] = rhs(x)
    _check_finite(derivs[n], float(times[n]))
    return Trajectory(times, states, derivs, svmap)


def simulate_network(params: SLParams, graph: WeightedGraph, x0: np.ndarray,
                     t_end: float, dt: float) -> Trajectory:
    return integrate_rk4(network_rhs(params, graph), x0, (0.0, t_end), dt,
                         StateVariableMap(graph.n_nodes, 2))


def finite_diff_derivs(times: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Second-order central differences inside, second-order one-sided at
    both ends. Requires a uniform grid with at least three samples."""
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    if times.ndim != 1 or times.size < 3:
        raise ParameterError("finite differences need at least three samples")
    if states.shape[0] != times.size:
        raise ShapeError(f"{times.size} times but {states.shape[0]} state rows")
    steps = np.diff(times)
    dt = steps[0]
    if dt <= 0 or not np.allclose(steps, dt, rtol=1e-9, atol=0.0):
        raise ParameterError("finite differences need a uniform, increasing time grid")
    return np.gradient(states, dt, axis=0, edge_order=2)


# ==================== PARAMETERS / INITIAL CONDITIONS ====================

def sample_random_params(n_nodes: int, sigma_range=DEFAULT_SIGMA_RANGE,
                         omega_range=DEFAULT_OMEGA_RANGE, seed=None) -> SLParams:
    """Uniform per-node draws; all sigmas first, then all omegas."""
    if n_nodes < 1:
        raise ParameterError(f"n_nodes must be positive, got {n_nodes}")
    s_lo, s_hi = validate_range(sigma_range, "sigma_range")
    w_lo, w_hi = validate_range(omega_range, "omega_range")
    rng = as_rng(seed)
    sigma = rng.uniform(s_lo, s_hi, size=n_nodes)
    omega = rng.uniform(w_lo, w_hi, size=n_nodes)
    return SLParams(sigma, omega)


def random_initial_condition(n_vars: int, seed=None, ic_range=DEFAULT_IC_RANGE) -> np.ndarray:
    lo, hi = validate_range(ic_range, "ic_range")
    return as_rng(seed).uniform(lo, hi, size=n_vars)


def simple_case_params() -> SLParams:
    return SLParams(np.full(3, SIMPLE_CASE_SIGMA), np.array(SIMPLE_CASE_OMEGA))


def simple_case_system(coupling: float = SIMPLE_CASE_COUPLING) -> Tuple[SLParams, WeightedGraph]:
    return simple_case_params(), simple_case_graph(coupling)


# ==================== GROUND TRUTH ====================

def _monomial(k: int, *factors: int) -> Tuple[int, ...]:
    exps = [0] * k
    for var in factors:
        exps[var] += 1
    return tuple(exps)


def true_coefficients(params: SLParams, graph: WeightedGraph,
                      library: FeatureLibrary) -> TrueModel:
    """Expanded right-hand side written in ``library``'s term basis."""
    _check_system(params, graph)
    svmap = library.svmap
    if svmap.vars_per_node != 2 or svmap.n_nodes != graph.n_nodes:
        raise ShapeError(
            f"library state map ({svmap.n_nodes} nodes x {svmap.vars_per_node}) does not "
            f"match a {graph.n_nodes}-node oscillator network"
        )
    k = svmap.total
    xi = np.zeros((len(library), k))

    def put(eq: int, value: float, *factors: int) -> None:
        exps = _monomial(k, *factors)
        if not library.has_term(exps):
            raise UnrepresentableModelError(
                f"library (degree {library.max_degree}) has no column for "
                f"{'*'.join(svmap.var_name(f) for f in factors)}"
            )
        xi[library.index_of(exps), eq] += value

    adj = graph.adjacency
    for n in range(graph.n_nodes):
        xn, yn = 2 * n, 2 * n + 1
        s, w = float(params.sigma[n]), float(params.omega[n])
        put(xn, s, xn)
        put(xn, -w, yn)
        put(xn, -1.0, xn, xn, xn)
        put(xn, -1.0, xn, yn, yn)
        put(yn, w, xn)
        put(yn, s, yn)
        put(yn, -1.0, xn, xn, yn)
        put(yn, -1.0, yn, yn, yn)
        for m in np.nonzero(adj[:, n])[0]:
            kn = float(adj[m, n])
            xm, ym = 2 * int(m), 2 * int(m) + 1
            put(xn, kn, xn, xm)
            put(xn, -kn, yn, ym)
            put(yn, kn, xn, ym)
            put(yn, kn, yn, xm)
    return TrueModel(xi, library)
