"""
Study orchestration: the three-node simple case, one-parameter sensitivity
sweeps over random ER/SF networks, the ER/SF summary table, and the penalty
curve table.

Every repetition owns ``seeded_rng(seed, value_index, rep_index)`` and draws,
in order: the graph, the node parameters, the training initial condition and
the test initial conditions. Results therefore depend only on the indices,
never on worker scheduling.
"""

from __future__ import annotations

import logging
import multiprocessing as mp
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from lib.config import SWEEP_PARAMS, ExperimentConfig, dump_config
from lib.formats import save_model, write_lines, write_metrics, write_table
from lib.graph import StateVariableMap, WeightedGraph, generate_er, generate_sf
from lib.heatmap import render_heatmap
from lib.library import FeatureLibrary, build_library
from lib.metrics import MetricsReport, cei, complexity, mse, r_squared
from lib.oscillator import (
    SLParams,
    Trajectory,
    random_initial_condition,
    sample_random_params,
    simple_case_system,
    simulate_network,
    true_coefficients,
)
from lib.regression import (
    CoefficientMatrix,
    FittedModel,
    SolverConfig,
    fit_model,
    penalty_curve,
    predict_derivs,
    simulate_model,
)
from lib.utils import (
    METHODS,
    METRICS_COLUMNS,
    DivergenceError,
    ParameterError,
    SolverError,
    UndefinedMetricError,
    ensure_dir,
    seeded_rng,
)

_log = logging.getLogger(__name__)

RUN_COLUMNS = ("param", "value", "rep", "status", "test_diverged") + METRICS_COLUMNS
AGGREGATE_COLUMNS = ("param", "value", "method", "metric", "mean", "se", "n_effective", "n_failed")
AGGREGATED_METRICS = ("gamma", "cei", "train_r2", "train_mse", "test_r2", "test_mse", "train_time_s")

TABLE1_ROWS = (
    ("Complexity", "gamma"),
    ("CEI", "cei"),
    ("Train_time", "train_time_s"),
    ("Train_r2", "train_r2"),
    ("Train_MSE", "train_mse"),
    ("Test_r2", "test_r2"),
    ("Test_MSE", "test_mse"),
)
_METHOD_LABELS = {"sindy": "SINDy", "sindyg": "SINDyG"}


@dataclass(frozen=True)
class TestScore:
    trajectory: int
    r2: Optional[float]
    mse: Optional[float]
    diverged: bool
    model_trajectory: Optional[Trajectory] = field(default=None, repr=False, compare=False)


@dataclass
class SimpleCaseResult:
    truth: FittedModel
    models: Dict[str, FittedModel]
    reports: Dict[str, MetricsReport]
    test_scores: Dict[str, List[TestScore]]
    train: Trajectory
    tests: List[Trajectory]
    out_dir: Path


# ==================== SCORING ====================

def _safe_metric(fn, predicted, observed) -> Optional[float]:
    try:
        return fn(predicted, observed)
    except UndefinedMetricError as e:
        _log.warning("%s", e)
        return None


def score_test_trajectory(model: FittedModel, test: Trajectory, index: int = 0) -> TestScore:
    """Simulate ``model`` from the test trajectory's first state on the same
    grid and compare its derivatives with the true ones."""
    t_span = (float(test.times[0]), float(test.times[-1]))
    try:
        predicted = simulate_model(model.coefficients, model.library, test.states[0], t_span, test.dt)
    except DivergenceError as e:
        _log.info("%s model diverged on test trajectory %d: %s", model.method, index, e)
        return TestScore(index, None, None, True)
    return TestScore(
        index,
        _safe_metric(r_squared, predicted.derivs, test.derivs),
        _safe_metric(mse, predicted.derivs, test.derivs),
        False,
        predicted,
    )


def score_model(model: FittedModel, dataset_id: str, train: Optional[Trajectory] = None,
                tests: Sequence[Trajectory] = (), truth: Optional[CoefficientMatrix] = None
                ) -> Tuple[MetricsReport, List[TestScore]]:
    """Metrics row for one model. Test metrics average over the test
    trajectories and are missing if the model diverges on any of them."""
    coefficients = model.coefficients
    train_r2 = train_mse = None
    if train is not None:
        predicted = predict_derivs(coefficients, model.library, train.states)
        train_r2 = _safe_metric(r_squared, predicted, train.derivs)
        train_mse = _safe_metric(mse, predicted, train.derivs)

    scores = [score_test_trajectory(model, test, i) for i, test in enumerate(tests)]
    test_r2 = test_mse = None
    if scores and not any(s.diverged for s in scores):
        r2s = [s.r2 for s in scores if s.r2 is not None]
        mses = [s.mse for s in scores if s.mse is not None]
        test_r2 = float(np.mean(r2s)) if r2s else None
        test_mse = float(np.mean(mses)) if mses else None

    report = MetricsReport(
        dataset_id=dataset_id,
        method=model.method,
        gamma=complexity(coefficients),
        cei=cei(coefficients, truth) if truth is not None else None,
        train_r2=train_r2,
        train_mse=train_mse,
        test_r2=test_r2,
        test_mse=test_mse,
        train_time_s=model.train_time,
    )
    return report, scores


def truth_model(params: SLParams, graph: WeightedGraph, library: FeatureLibrary,
                solver: SolverConfig) -> FittedModel:
    truth = true_coefficients(params, graph, library)
    return FittedModel(CoefficientMatrix.for_library(truth.xi, library), "true", solver, library)


def fit_methods(library: FeatureLibrary, train: Trajectory, graph: WeightedGraph,
                solver: SolverConfig) -> Dict[str, FittedModel]:
    return {
        method: fit_model(method, library, train.states, train.derivs, solver, graph)
        for method in METHODS
    }


# ==================== SIMPLE CASE ====================

def simulate_simple_case(config: ExperimentConfig) -> Tuple[SLParams, WeightedGraph, Trajectory, List[Trajectory]]:
    params, graph = simple_case_system(config.coupling)
    n_vars = 2 * graph.n_nodes
    x0 = random_initial_condition(n_vars, seeded_rng(config.seed, 0), config.ic_range)
    train = simulate_network(params, graph, x0, config.t_end, config.dt)
    tests = [
        simulate_network(params, graph,
                         random_initial_condition(n_vars, seeded_rng(config.seed, 1 + i), config.ic_range),
                         config.test_length, config.dt)
        for i in range(config.n_test)
    ]
    return params, graph, train, tests


def _trajectory_rows(test: Trajectory, scores: Dict[str, TestScore]) -> List[dict]:
    names = test.svmap.var_names()
    rows = []
    for i, t in enumerate(test.times):
        row = {"t": float(t)}
        for k, var in enumerate(names):
            row[f"true_{var}"] = float(test.states[i, k])
            for method in METHODS:
                traj = scores[method].model_trajectory
                row[f"{method}_{var}"] = float(traj.states[i, k]) if traj is not None else None
        rows.append(row)
    return rows


def _coefficient_rows(truth: CoefficientMatrix, models: Dict[str, FittedModel]) -> List[dict]:
    rows = []
    for j, term in enumerate(truth.term_names):
        for k, var in enumerate(truth.var_names):
            row = {"term": term, "var": var, "true": float(truth.xi[j, k])}
            for method in METHODS:
                row[method] = float(models[method].coefficients.xi[j, k])
            rows.append(row)
    return rows


def run_simple_case(config: ExperimentConfig) -> SimpleCaseResult:
    """Three oscillators, nodes 1 and 2 coupled: fit both methods on one
    training trajectory and score them on ``n_test`` unseen ones."""
    config = replace(config, study="simple")
    out = ensure_dir(config.out_path)
    solver = config.solver_config()
    try:
        params, graph, train, tests = simulate_simple_case(config)
    except DivergenceError as e:
        raise DivergenceError(e.time, f"simple case with coupling={config.coupling}, seed={config.seed}") from e

    library = build_library(StateVariableMap(graph.n_nodes, 2), config.degree)
    truth = truth_model(params, graph, library, solver)
    models = fit_methods(library, train, graph, solver)

    reports: Dict[str, MetricsReport] = {}
    test_scores: Dict[str, List[TestScore]] = {}
    for method, model in models.items():
        reports[method], test_scores[method] = score_model(
            model, "simple", train, tests, truth.coefficients
        )
        _log.info("simple case %s: gamma=%d cei=%s train_r2=%s", method, reports[method].gamma,
                  reports[method].cei, reports[method].train_r2)

    write_table(_coefficient_rows(truth.coefficients, models), out / "coefficients.csv",
                ("term", "var", "true") + METHODS)
    write_metrics([reports[m] for m in METHODS], out / "metrics.csv")
    write_table(
        ({"method": m, "trajectory": s.trajectory, "r2": s.r2, "mse": s.mse, "diverged": int(s.diverged)}
         for m in METHODS for s in test_scores[m]),
        out / "test_metrics.csv",
        ("method", "trajectory", "r2", "mse", "diverged"),
    )
    write_table(_trajectory_rows(tests[0], {m: test_scores[m][0] for m in METHODS}),
                out / "trajectories.csv")
    save_model(truth, out / "model_true.json")
    for method, model in models.items():
        save_model(model, out / f"model_{method}.json")
        write_lines(model.coefficients.equations(), out / f"equations_{method}.txt")
    write_lines(truth.coefficients.equations(), out / "equations_true.txt")
    dump_config(config, out / "config.yaml")

    if config.heatmap:
        render_heatmap(
            [("true", truth.coefficients)] + [(m, models[m].coefficients) for m in METHODS],
            out / "heatmap.png",
        )
    _log.info("simple case written to %s", out)
    return SimpleCaseResult(truth, models, reports, test_scores, train, tests, out)


# ==================== RANDOM NETWORKS ====================

def generate_system(config: ExperimentConfig, rng: np.random.Generator) -> Tuple[WeightedGraph, SLParams]:
    if config.graph_type == "er":
        graph = generate_er(config.n_nodes, config.edge_prob, config.weight_range, rng)
    else:
        graph = generate_sf(config.n_nodes, config.m_attach, config.weight_range, rng)
    params = sample_random_params(config.n_nodes, config.sigma_range, config.omega_range, rng)
    return graph, params


def _failed_rows(base: dict, dataset_id: str, status: str) -> List[dict]:
    blank = dict.fromkeys(METRICS_COLUMNS)
    return [
        {**base, "status": status, "test_diverged": 0, **blank, "dataset_id": dataset_id, "method": method}
        for method in METHODS
    ]


def run_repetition(config: ExperimentConfig, param: str, value, value_index: int,
                   rep_index: int) -> List[dict]:
    """One random network: simulate, fit both methods, score. Returns one
    row per method; failures become rows with status other than ``ok``."""
    rng = seeded_rng(config.seed, value_index, rep_index)
    dataset_id = f"{param}={value}/rep{rep_index}"
    base = {"param": param, "value": value, "rep": rep_index}
    solver = config.solver_config()

    graph, params = generate_system(config, rng)
    n_vars = 2 * config.n_nodes
    try:
        train = simulate_network(params, graph, random_initial_condition(n_vars, rng, config.ic_range),
                                 config.t_end, config.dt)
        tests = [
            simulate_network(params, graph, random_initial_condition(n_vars, rng, config.ic_range),
                             config.test_length, config.dt)
            for _ in range(config.n_test)
        ]
    except DivergenceError as e:
        _log.warning("%s: true system diverged (%s); sigma=%s omega=%s max_weight=%.3g",
                     dataset_id, e, params.sigma.round(3).tolist(), params.omega.round(3).tolist(),
                     float(graph.adjacency.max()))
        return _failed_rows(base, dataset_id, "diverged")

    library = build_library(StateVariableMap(config.n_nodes, 2), config.degree)
    truth = truth_model(params, graph, library, solver)
    try:
        models = fit_methods(library, train, graph, solver)
    except SolverError as e:
        _log.warning("%s: solver failed: %s", dataset_id, e)
        return _failed_rows(base, dataset_id, "solver_error")

    rows = []
    for method, model in models.items():
        report, scores = score_model(model, dataset_id, train, tests, truth.coefficients)
        status = "ok" if report.gamma > 0 else "empty_support"
        if status != "ok":
            _log.warning("%s: %s returned an empty model", dataset_id, method)
        rows.append({**base, "status": status, "test_diverged": int(any(s.diverged for s in scores)),
                     **report.to_row()})
        _log.info("%s %s: gamma=%d cei=%.4g test_r2=%s", dataset_id, method, report.gamma,
                  report.cei, report.test_r2)
    return rows


def _run_job(job) -> List[dict]:
    return run_repetition(*job)


def _execute(jobs: List[tuple], workers: int) -> List[dict]:
    if workers > 1 and len(jobs) > 1:
        # Pool.map keeps job order.
        with mp.Pool(min(workers, len(jobs))) as pool:
            results = pool.map(_run_job, jobs)
    else:
        results = [_run_job(job) for job in jobs]
    return [row for rows in results for row in rows]


def run_repetitions(config: ExperimentConfig, param: str, values: Sequence) -> List[dict]:
    """Every (value, repetition) pair, serially or on a process pool. Rows
    come back ordered by (value_index, rep_index) either way."""
    jobs = [
        (config.with_sweep_value(param, v) if param in SWEEP_PARAMS else config, param, v, vi, rep)
        for vi, v in enumerate(values)
        for rep in range(config.reps)
    ]
    return _execute(jobs, config.workers)


def aggregate_runs(runs: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard error (sample std / sqrt(n)) of every metric per
    (param, value, method), over the repetitions with status ``ok``."""
    out = []
    for (param, value, method), group in runs.groupby(["param", "value", "method"], sort=False):
        ok = group[group["status"] == "ok"]
        n_failed = int(len(group) - len(ok))
        for metric in AGGREGATED_METRICS:
            values = pd.to_numeric(ok[metric], errors="coerce").dropna()
            n = int(len(values))
            mean = float(values.mean()) if n else None
            se = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else None
            out.append({"param": param, "value": value, "method": method, "metric": metric,
                        "mean": mean, "se": se, "n_effective": n, "n_failed": n_failed})
    return pd.DataFrame(out, columns=list(AGGREGATE_COLUMNS))


def run_general_sweep(config: ExperimentConfig, param: str, values: Sequence[float]) -> pd.DataFrame:
    """Vary one parameter over ``values`` with ``reps`` random networks each;
    writes ``sweep_<param>_runs.csv`` and ``sweep_<param>_aggregate.csv``."""
    if param not in SWEEP_PARAMS:
        raise ParameterError(f"unknown sweep parameter {param!r}; expected one of {SWEEP_PARAMS}")
    if not values:
        raise ParameterError("sweep needs at least one value")
    if param == "n_nodes":
        values = [int(v) for v in values]
    for v in values:
        config.with_sweep_value(param, v)

    config = replace(config, study="general")
    out = ensure_dir(config.out_path)
    _log.info("sweep %s over %s (%d reps each, %s graphs)", param, list(values), config.reps, config.graph_type)
    runs = pd.DataFrame(run_repetitions(config, param, values), columns=list(RUN_COLUMNS))
    aggregate = aggregate_runs(runs)
    write_table(runs.to_dict("records"), out / f"sweep_{param}_runs.csv", RUN_COLUMNS)
    write_table(aggregate.to_dict("records"), out / f"sweep_{param}_aggregate.csv", AGGREGATE_COLUMNS)
    dump_config(config, out / f"sweep_{param}_config.yaml")
    _log.info("sweep %s done: %d run rows, %d failed", param, len(runs), int((runs["status"] != "ok").sum()))
    return aggregate


def _cell(mean, se) -> str:
    if mean is None or pd.isna(mean):
        return "n/a"
    if se is None or pd.isna(se):
        return f"{mean:.6g}"
    return f"{mean:.6g} ± {se:.3g}"


def run_table1(config: ExperimentConfig) -> pd.DataFrame:
    """ER and SF ensembles of ``reps`` networks with ``n_nodes`` oscillators;
    writes the per-run rows, the tidy aggregate and the mean ± SE table."""
    config = replace(config, study="general")
    out = ensure_dir(config.out_path)
    # The graph type's position doubles as the value index so ER and SF draw from separate streams.
    jobs = [
        (replace(config, graph_type=graph_type), "graph_type", graph_type, type_index, rep)
        for type_index, graph_type in enumerate(("er", "sf"))
        for rep in range(config.reps)
    ]
    runs = pd.DataFrame(_execute(jobs, config.workers), columns=list(RUN_COLUMNS))
    aggregate = aggregate_runs(runs)

    table = {}
    for graph_type in ("er", "sf"):
        for method in METHODS:
            column = f"{graph_type.upper()}_{_METHOD_LABELS[method]}"
            sub = aggregate[(aggregate["value"] == graph_type) & (aggregate["method"] == method)]
            by_metric = sub.set_index("metric")
            table[column] = [
                _cell(by_metric.at[metric, "mean"], by_metric.at[metric, "se"]) for _, metric in TABLE1_ROWS
            ]
    frame = pd.DataFrame(table, index=[label for label, _ in TABLE1_ROWS])
    frame.index.name = "metric"

    write_table(runs.to_dict("records"), out / "table1_runs.csv", RUN_COLUMNS)
    write_table(aggregate.to_dict("records"), out / "table1_aggregate.csv", AGGREGATE_COLUMNS)
    write_table(frame.reset_index().to_dict("records"), out / "table1.csv")
    dump_config(config, out / "table1_config.yaml")
    _log.info("table1 written to %s (%d reps per graph type)", out, config.reps)
    return frame


# ==================== PENALTY CURVE ====================

def run_penalty_curve(config: ExperimentConfig, ratios: Sequence[float]) -> Path:
    if not ratios:
        raise ParameterError("penalty curve needs at least one L/|S| ratio")
    out = ensure_dir(config.out_path)
    path = write_table(penalty_curve(ratios), out / "penalty_curve.csv", ("ratio", "m", "f"))
    _log.info("penalty curve for ratios %s written to %s", list(ratios), path)
    return path
