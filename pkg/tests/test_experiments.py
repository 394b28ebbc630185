import math

import numpy as np
import pandas as pd
import pytest

from lib.config import ExperimentConfig, load_config_file
from lib.experiments import (
    AGGREGATED_METRICS,
    RUN_COLUMNS,
    TABLE1_ROWS,
    aggregate_runs,
    run_general_sweep,
    run_penalty_curve,
    run_repetition,
    run_repetitions,
    run_table1,
    score_model,
)
from lib.formats import read_table
from lib.graph import StateVariableMap, WeightedGraph
from lib.library import build_library
from lib.oscillator import SLParams, random_initial_condition, simulate_network
from lib.regression import CoefficientMatrix, FittedModel, SolverConfig
from lib.utils import DEFAULT_IC_RANGE, ParameterError, seeded_rng


def _small(tmp_path, **kwargs):
    values = dict(n_nodes=3, t_end=2.0, n_test=1, reps=2, out_dir=str(tmp_path))
    values.update(kwargs)
    return ExperimentConfig(**values)


def _without_time(rows):
    return [{k: v for k, v in row.items() if k != "train_time_s"} for row in rows]


# ==================== SIMPLE CASE ====================

def test_simple_case_recovers_the_coupled_model(simple_case):
    sindyg = simple_case.reports["sindyg"]
    sindy = simple_case.reports["sindy"]
    assert sindyg.gamma == 32
    assert np.array_equal(simple_case.models["sindyg"].coefficients.support(),
                          simple_case.truth.coefficients.support())
    assert sindyg.cei <= 0.01
    assert sindy.cei >= sindyg.cei
    assert sindyg.train_r2 >= 0.9999
    assert sindy.train_r2 >= 0.9999
    assert sindyg.test_r2 >= 0.999
    assert sindy.gamma >= sindyg.gamma
    assert 0 < sindyg.train_time_s < 5


def test_simple_case_generalizes_to_every_test_trajectory(simple_case):
    sindyg_scores = simple_case.test_scores["sindyg"]
    sindy_scores = simple_case.test_scores["sindy"]
    assert len(sindyg_scores) == len(sindy_scores) == 5
    for graph_score, plain_score in zip(sindyg_scores, sindy_scores):
        assert not graph_score.diverged
        assert graph_score.r2 >= 0.999
        if not plain_score.diverged:
            # ties within rounding count as "at least as good"
            assert graph_score.r2 >= plain_score.r2 - 1e-9


def test_simple_case_seeds(simple_case):
    assert np.array_equal(simple_case.train.states[0],
                          random_initial_condition(6, seeded_rng(0, 0), DEFAULT_IC_RANGE))
    assert np.array_equal(simple_case.tests[1].states[0],
                          random_initial_condition(6, seeded_rng(0, 2), DEFAULT_IC_RANGE))


def test_simple_case_bundle(simple_case):
    out = simple_case.out_dir
    for name in ("coefficients.csv", "metrics.csv", "test_metrics.csv", "trajectories.csv",
                 "model_true.json", "model_sindy.json", "model_sindyg.json",
                 "equations_true.txt", "equations_sindy.txt", "equations_sindyg.txt", "config.yaml"):
        assert (out / name).is_file(), name
    assert load_config_file(out / "config.yaml")["study"] == "simple"
    assert (out / "heatmap.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    coefficients = read_table(out / "coefficients.csv")
    assert list(coefficients.columns) == ["term", "var", "true", "sindy", "sindyg"]
    assert len(coefficients) == 84 * 6
    assert int((coefficients["true"] != 0).sum()) == 32

    metrics = read_table(out / "metrics.csv")
    assert metrics["method"].tolist() == ["sindy", "sindyg"]
    assert metrics.loc[1, "gamma"] == 32

    assert len(read_table(out / "test_metrics.csv")) == 2 * 5
    trajectories = read_table(out / "trajectories.csv")
    assert len(trajectories) == 2001
    assert len(trajectories.columns) == 1 + 3 * 6

    equations = (out / "equations_true.txt").read_text().splitlines()
    assert equations[0].startswith("dx0/dt = 0.2 x0")


def test_true_model_scores_perfectly(simple_case):
    report, scores = score_model(simple_case.truth, "truth", simple_case.train, simple_case.tests,
                                 simple_case.truth.coefficients)
    assert report.gamma == 32
    assert report.cei == 0.0
    assert report.train_r2 == pytest.approx(1.0, abs=1e-12)
    assert report.train_mse == pytest.approx(0.0, abs=1e-20)
    assert report.test_r2 == pytest.approx(1.0, abs=1e-8)
    assert not any(s.diverged for s in scores)


def test_divergent_model_has_no_test_metrics():
    library = build_library(StateVariableMap(1, 2), 3)
    xi = np.zeros((len(library), 2))
    xi[library.index_of((3, 0)), 0] = 5.0
    model = FittedModel(CoefficientMatrix.for_library(xi, library), "sindy", SolverConfig(), library)
    test = simulate_network(SLParams([0.2], [1.0]), WeightedGraph.empty(1), np.array([1.0, 0.0]), 2.0, 0.01)

    report, scores = score_model(model, "blowup", train=test, tests=[test])
    assert scores[0].diverged
    assert report.test_r2 is None and report.test_mse is None
    assert report.train_r2 is not None
    assert report.cei is None


# ==================== RANDOM NETWORKS ====================

def test_repetition_rows(tmp_path):
    rows = run_repetition(_small(tmp_path), "L", 10.0, 0, 0)
    assert [r["method"] for r in rows] == ["sindy", "sindyg"]
    for row in rows:
        assert set(row) == set(RUN_COLUMNS)
        assert row["status"] in ("ok", "empty_support")
        assert row["dataset_id"] == "L=10.0/rep0"


def test_repetition_is_reproducible(tmp_path):
    config = _small(tmp_path)
    first = run_repetition(config, "L", 10.0, 1, 3)
    second = run_repetition(config, "L", 10.0, 1, 3)
    assert _without_time(first) == _without_time(second)


def test_parallel_and_serial_runs_agree(tmp_path):
    serial = run_repetitions(_small(tmp_path, workers=1), "L", [5.0, 10.0])
    parallel = run_repetitions(_small(tmp_path, workers=2), "L", [5.0, 10.0])
    assert _without_time(serial) == _without_time(parallel)
    assert [(r["value"], r["rep"]) for r in serial][::2] == [(5.0, 0), (5.0, 1), (10.0, 0), (10.0, 1)]


def test_aggregate_uses_successful_runs_only():
    base = dict.fromkeys(RUN_COLUMNS)
    runs = pd.DataFrame([
        {**base, "param": "L", "value": 1.0, "rep": 0, "method": "sindy", "status": "ok", "gamma": 10, "cei": 0.1},
        {**base, "param": "L", "value": 1.0, "rep": 1, "method": "sindy", "status": "ok", "gamma": 14, "cei": 0.3},
        {**base, "param": "L", "value": 1.0, "rep": 2, "method": "sindy", "status": "diverged"},
    ], columns=list(RUN_COLUMNS))
    aggregate = aggregate_runs(runs).set_index("metric")
    assert len(aggregate) == len(AGGREGATED_METRICS)
    assert aggregate.loc["gamma", "mean"] == pytest.approx(12.0)
    assert aggregate.loc["gamma", "se"] == pytest.approx(2.0)
    assert aggregate.loc["gamma", "n_effective"] == 2
    assert aggregate.loc["gamma", "n_failed"] == 1
    assert aggregate.loc["cei", "mean"] == pytest.approx(0.2)
    assert aggregate.loc["test_r2", "n_effective"] == 0
    assert pd.isna(aggregate.loc["test_r2", "mean"])


def test_general_sweep_writes_tables(tmp_path):
    aggregate = run_general_sweep(_small(tmp_path), "L", [0.0, 10.0])
    assert len(aggregate) == 2 * 2 * len(AGGREGATED_METRICS)
    runs = read_table(tmp_path / "sweep_L_runs.csv")
    assert list(runs.columns) == list(RUN_COLUMNS)
    assert len(runs) == 2 * 2 * 2
    written = read_table(tmp_path / "sweep_L_aggregate.csv")
    assert list(written.columns) == ["param", "value", "method", "metric", "mean", "se", "n_effective", "n_failed"]


def test_general_sweep_rejects_unknown_parameter(tmp_path):
    with pytest.raises(ParameterError):
        run_general_sweep(_small(tmp_path), "dt", [0.1])
    with pytest.raises(ParameterError):
        run_general_sweep(_small(tmp_path), "L", [])


def test_table1_layout(tmp_path):
    table = run_table1(_small(tmp_path))
    assert list(table.columns) == ["ER_SINDy", "ER_SINDyG", "SF_SINDy", "SF_SINDyG"]
    assert list(table.index) == [label for label, _ in TABLE1_ROWS]
    written = read_table(tmp_path / "table1.csv")
    assert written.columns[0] == "metric"
    assert (tmp_path / "table1_runs.csv").is_file()
    assert (tmp_path / "table1_aggregate.csv").is_file()
    assert load_config_file(tmp_path / "table1_config.yaml")["study"] == "general"


def test_penalty_curve_table(tmp_path):
    path = run_penalty_curve(_small(tmp_path), [1.0, 2.0, 5.0])
    table = read_table(path)
    assert len(table) == 3 * 101
    assert table["f"].between(0, 1).all()


# ==================== ENSEMBLE STUDIES ====================

def _clears_pooled_se(means, ses, graph_type, metric, higher_is_better):
    graph_mean, plain_mean = means[(graph_type, "sindyg", metric)], means[(graph_type, "sindy", metric)]
    margin = graph_mean - plain_mean if higher_is_better else plain_mean - graph_mean
    pooled = math.hypot(ses[(graph_type, "sindyg", metric)], ses[(graph_type, "sindy", metric)])
    return margin > pooled, (graph_type, metric, graph_mean, plain_mean, pooled)


@pytest.mark.slow
def test_table1_graph_information_improves_every_summary(tmp_path):
    run_table1(ExperimentConfig(out_dir=str(tmp_path), workers=2))
    aggregate = read_table(tmp_path / "table1_aggregate.csv").set_index(["value", "method", "metric"])
    means = aggregate["mean"]
    ses = aggregate["se"].fillna(0.0)
    for graph_type in ("er", "sf"):
        # the true 5-node models have 40 + 8 * edges terms out of 2860 candidates
        assert means[(graph_type, "sindyg", "gamma")] < 150
        assert means[(graph_type, "sindyg", "gamma")] <= means[(graph_type, "sindy", "gamma")]
        for metric, higher_is_better in (("gamma", False), ("cei", False), ("test_r2", True)):
            ok, detail = _clears_pooled_se(means, ses, graph_type, metric, higher_is_better)
            assert ok, detail


@pytest.mark.slow
def test_node_count_sweep_completes(tmp_path):
    aggregate = run_general_sweep(ExperimentConfig(out_dir=str(tmp_path), reps=5, workers=2),
                                  "n_nodes", [3, 5])
    gamma = aggregate[aggregate["metric"] == "gamma"]
    assert (gamma["n_effective"] > 0).all()
