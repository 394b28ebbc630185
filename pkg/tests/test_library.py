from math import comb

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lib.graph import StateVariableMap
from lib.library import build_library, column_normalize, evaluate, term_name
from lib.utils import ParameterError, ShapeError


def test_names_for_one_node_degree_two():
    library = build_library(StateVariableMap(1, 2), 2)
    assert library.names == ["1", "x0", "y0", "x0^2", "x0 y0", "y0^2"]


@pytest.mark.parametrize("n_nodes, degree", [(1, 1), (1, 3), (3, 3), (2, 4)])
def test_term_count(n_nodes, degree):
    svmap = StateVariableMap(n_nodes, 2)
    assert len(build_library(svmap, degree)) == comb(svmap.total + degree, degree)


def test_three_node_cubic_library_has_84_terms():
    assert len(build_library(StateVariableMap(3, 2), 3)) == 84


def test_terms_are_ordered_by_degree():
    library = build_library(StateVariableMap(2, 2), 3)
    degrees = [t.degree for t in library.terms]
    assert degrees == sorted(degrees)
    assert library.terms[0].is_constant


def test_source_sets():
    library = build_library(StateVariableMap(2, 2), 3)
    term = library.terms[library.index_of((1, 0, 1, 0))]
    assert term.name == "x0 x1"
    assert term.source_vars == frozenset({0, 2})
    assert term.source_nodes == frozenset({0, 1})

    cube = library.terms[library.index_of((0, 3, 0, 0))]
    assert cube.name == "y0^3"
    assert cube.source_vars == frozenset({1})
    assert cube.source_nodes == frozenset({0})


def test_index_lookup():
    library = build_library(StateVariableMap(1, 2), 2)
    assert library.index_of([0, 1]) == 2
    assert library.has_term((1, 1))
    assert not library.has_term((3, 0))
    with pytest.raises(KeyError):
        library.index_of((0, 3))


def test_term_name_for_wider_nodes():
    svmap = StateVariableMap(1, 3)
    assert term_name((2, 0, 1), svmap) == "s0_0^2 s0_2"
    assert term_name((0, 0, 0), svmap) == "1"


def test_library_needs_positive_degree():
    with pytest.raises(ParameterError):
        build_library(StateVariableMap(1, 2), 0)


def test_evaluate_single_row():
    library = build_library(StateVariableMap(1, 2), 2)
    assert_allclose(evaluate(library, np.array([[2.0, 3.0]])), [[1, 2, 3, 4, 6, 9]])


def test_evaluate_accepts_a_single_state():
    library = build_library(StateVariableMap(1, 2), 2)
    assert evaluate(library, np.array([2.0, 3.0])).shape == (1, 6)


def test_product_columns_match_their_factors(rng):
    library = build_library(StateVariableMap(2, 2), 3)
    x = rng.normal(size=(25, 4))
    theta = evaluate(library, x)
    assert_allclose(theta[:, library.index_of((2, 1, 0, 0))], x[:, 0] ** 2 * x[:, 1], rtol=1e-14)
    assert_allclose(theta[:, library.index_of((0, 0, 1, 1))], x[:, 2] * x[:, 3], rtol=1e-14)
    assert np.all(theta[:, 0] == 1.0)


def test_evaluate_shape_check():
    library = build_library(StateVariableMap(1, 2), 2)
    with pytest.raises(ShapeError):
        evaluate(library, np.zeros((5, 3)))


def test_column_normalize():
    normalized, scales = column_normalize(np.array([[3.0, 0.0], [4.0, 0.0]]))
    assert_allclose(normalized[:, 0], [0.6, 0.8])
    assert_allclose(scales, [5.0, 1.0])
    assert not normalized[:, 1].any()


def test_column_normalize_warns_on_zero_columns(caplog):
    column_normalize(np.array([[1.0, 0.0], [1.0, 0.0]]))
    assert "zero-norm" in caplog.text
