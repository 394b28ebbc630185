import json

import numpy as np
import pytest

from lib.formats import (
    load_derivs,
    load_graph,
    load_model,
    load_trajectory,
    read_table,
    save_derivs,
    save_graph,
    save_model,
    save_trajectory,
    svmap_from_names,
    write_metrics,
    write_table,
)
from lib.graph import StateVariableMap, WeightedGraph, generate_er
from lib.library import build_library
from lib.metrics import MetricsReport
from lib.regression import SolverConfig, fit_model
from lib.utils import FormatError, ShapeError


# ==================== GRAPH ====================

def test_graph_round_trip(tmp_path):
    g = generate_er(7, 0.5, (0.013, 0.9), seed=11)
    path = save_graph(g, tmp_path / "graph.csv")
    assert path.read_text().splitlines()[0] == "n=7,directed=0"
    assert load_graph(path) == g


def test_directed_graph_round_trip(tmp_path):
    g = WeightedGraph(3, [[0, 0.1, 0], [0, 0, 1 / 3], [0.7, 0, 0]], directed=True)
    assert load_graph(save_graph(g, tmp_path / "g.csv")) == g


def _write(tmp_path, text, name="bad.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_graph_header_is_required(tmp_path):
    with pytest.raises(FormatError) as excinfo:
        load_graph(_write(tmp_path, "0,1\n1,0\n"))
    assert excinfo.value.row == 1


def test_graph_must_be_square(tmp_path):
    with pytest.raises(FormatError):
        load_graph(_write(tmp_path, "n=2,directed=0\n0,1,0\n1,0,0\n"))


def test_graph_negative_weight_is_located(tmp_path):
    with pytest.raises(FormatError) as excinfo:
        load_graph(_write(tmp_path, "n=2,directed=1\n0,-1\n0,0\n"))
    assert (excinfo.value.row, excinfo.value.column) == (2, 2)


def test_graph_non_number_is_located(tmp_path):
    with pytest.raises(FormatError) as excinfo:
        load_graph(_write(tmp_path, "n=2,directed=0\n0,1\nabc,0\n"))
    assert (excinfo.value.row, excinfo.value.column) == (3, 1)


def test_graph_asymmetric_undirected_is_a_format_error(tmp_path):
    with pytest.raises(FormatError):
        load_graph(_write(tmp_path, "n=2,directed=0\n0,1\n0.5,0\n"))


def test_missing_file(tmp_path):
    with pytest.raises(FormatError):
        load_graph(tmp_path / "nope.csv")
    with pytest.raises(FormatError):
        load_trajectory(tmp_path / "nope.csv")


# ==================== TRAJECTORY ====================

def test_trajectory_round_trip_is_exact(tmp_path, rng):
    svmap = StateVariableMap(2, 2)
    times = 0.01 * np.arange(50)
    states = rng.normal(size=(50, 4)) / 3
    path = save_trajectory(times, states, svmap, tmp_path / "traj.csv")
    assert path.read_text().splitlines()[0] == "t,x0,y0,x1,y1"
    t, x, loaded_map = load_trajectory(path)
    assert np.array_equal(t, times)
    assert np.array_equal(x, states)
    assert loaded_map == svmap


def test_derivative_round_trip(tmp_path, rng):
    svmap = StateVariableMap(1, 2)
    times = np.linspace(0, 1, 11)
    derivs = rng.normal(size=(11, 2))
    path = save_derivs(times, derivs, svmap, tmp_path / "d.csv")
    assert path.read_text().splitlines()[0] == "t,dx0,dy0"
    loaded, loaded_map = load_derivs(path, times)
    assert np.array_equal(loaded, derivs)
    assert loaded_map == svmap
    with pytest.raises(FormatError):
        load_derivs(path, times + 0.5)


def test_trajectory_shape_check(tmp_path):
    with pytest.raises(ShapeError):
        save_trajectory(np.arange(3.0), np.zeros((3, 3)), StateVariableMap(1, 2), tmp_path / "t.csv")


def test_trajectory_format_errors(tmp_path):
    with pytest.raises(FormatError):
        load_trajectory(_write(tmp_path, "time,x0,y0\n0,1,2\n"))
    with pytest.raises(FormatError):
        load_trajectory(_write(tmp_path, "t,y0,x0\n0,1,2\n"))
    with pytest.raises(FormatError):
        load_trajectory(_write(tmp_path, "t,x0,y0\n0,1,2\n0,1,2\n"))
    with pytest.raises(FormatError) as excinfo:
        load_trajectory(_write(tmp_path, "t,x0,y0\n0,1,2\n0.1,1,\n"))
    assert (excinfo.value.row, excinfo.value.column) == (3, 3)


def test_state_names_for_wider_nodes():
    svmap = svmap_from_names(["s0_0", "s0_1", "s0_2", "s1_0", "s1_1", "s1_2"])
    assert (svmap.n_nodes, svmap.vars_per_node) == (2, 3)
    with pytest.raises(FormatError):
        svmap_from_names(["a", "b"])


# ==================== MODEL JSON ====================

def _fitted(rng):
    library = build_library(StateVariableMap(1, 2), 2)
    states = rng.normal(size=(40, 2))
    derivs = states @ np.array([[0.2, 1.0], [-1.0, 0.2]])
    return fit_model("sindy", library, states, derivs, SolverConfig(lam=1e-6, eta=0.01))


def test_model_round_trip(tmp_path, rng):
    model = _fitted(rng)
    path = save_model(model, tmp_path / "model.json")
    data = json.loads(path.read_text())
    assert data["method"] == "sindy"
    assert data["config"]["lambda"] == 1e-6
    assert data["library"] == {"max_degree": 2, "vars_per_node": 2}

    loaded = load_model(path)
    assert np.array_equal(loaded.coefficients.xi, model.coefficients.xi)
    assert loaded.coefficients.term_names == model.coefficients.term_names
    assert loaded.config == model.config
    assert loaded.library.names == model.library.names
    assert loaded.train_time is None


def test_model_degree_is_inferred_without_metadata(tmp_path, rng):
    path = save_model(_fitted(rng), tmp_path / "model.json")
    data = json.loads(path.read_text())
    del data["library"]
    path.write_text(json.dumps(data))
    assert load_model(path).library.max_degree == 2


def test_model_format_errors(tmp_path, rng):
    path = save_model(_fitted(rng), tmp_path / "model.json")
    data = json.loads(path.read_text())

    shuffled = dict(data, term_names=list(reversed(data["term_names"])))
    with pytest.raises(FormatError):
        load_model(_write(tmp_path, json.dumps(shuffled), "shuffled.json"))

    with pytest.raises(FormatError):
        load_model(_write(tmp_path, json.dumps({k: v for k, v in data.items() if k != "xi"}), "missing.json"))

    with pytest.raises(FormatError) as excinfo:
        load_model(_write(tmp_path, '{\n  "method": \n', "broken.json"))
    assert excinfo.value.row == 3


# ==================== TABLES ====================

def test_tables_write_missing_values_as_na(tmp_path):
    path = write_table([{"a": 1.5, "b": None}, {"a": 0.1, "b": 2.0}], tmp_path / "t.csv", ("a", "b"))
    assert path.read_text().splitlines() == ["a,b", "1.5,n/a", "0.10000000000000001,2"]
    df = read_table(path)
    assert np.isnan(df.loc[0, "b"])
    assert df.loc[1, "a"] == 0.1


def test_metrics_csv_header(tmp_path):
    path = write_metrics([MetricsReport("simple", "sindyg", 32, cei=0.003)], tmp_path / "metrics.csv")
    assert path.read_text().splitlines()[0] == \
        "dataset_id,method,gamma,cei,train_r2,train_mse,test_r2,test_mse,train_time_s"
