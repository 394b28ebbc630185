import numpy as np
import pytest

from lib.metrics import MetricsReport, cei, complexity, mse, r_squared, timed_fit
from lib.regression import CoefficientMatrix, SolverConfig, stlsq
from lib.utils import METRICS_COLUMNS, ParameterError, ShapeError, UndefinedMetricError


def _matrix(values, terms=("1", "x0"), variables=("x0",)):
    return CoefficientMatrix(np.array(values, dtype=float), terms, variables)


# ==================== COMPLEXITY ====================

def test_complexity_counts_nonzeros():
    assert complexity(np.zeros((4, 2))) == 0
    assert complexity(_matrix([[0.0], [-3.0]])) == 1
    assert complexity(np.array([[1e-9, 0.5]]), tol=1e-6) == 1


def test_complexity_rejects_negative_tolerance():
    with pytest.raises(ParameterError):
        complexity(np.ones(2), tol=-1.0)


def test_complexity_of_the_simple_case_truth(simple_case):
    assert complexity(simple_case.truth.coefficients) == 32


# ==================== CEI ====================

def test_cei_examples():
    a = _matrix([[1.0], [0.0]])
    assert cei(a, a) == 0.0
    assert cei(a, _matrix([[1.0], [0.5]])) == 0.25


def test_cei_is_symmetric_and_scales_linearly(rng):
    p, t = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    assert cei(p, t) == pytest.approx(cei(t, p))
    assert cei(t + 3 * (p - t), t) == pytest.approx(3 * cei(p, t))


def test_cei_requires_matching_models():
    with pytest.raises(ShapeError):
        cei(_matrix([[1.0], [0.0]]), _matrix([[1.0], [0.0]], terms=("1", "y0")))
    with pytest.raises(ShapeError):
        cei(np.zeros((2, 1)), np.zeros((3, 1)))


# ==================== R^2 / MSE ====================

def test_r_squared_trivial_cases(rng):
    observed = rng.normal(size=(20, 3))
    assert r_squared(observed, observed) == 1.0
    mean = np.broadcast_to(observed.mean(axis=0), observed.shape)
    assert r_squared(mean, observed) == pytest.approx(0.0, abs=1e-12)


def test_r_squared_with_constant_offset(rng):
    observed = rng.normal(size=(20, 3))
    predicted = observed + 0.1
    ss_res = 20 * 3 * 0.01
    ss_tot = sum(((observed[:, k] - observed[:, k].mean()) ** 2).sum() for k in range(3))
    assert r_squared(predicted, observed) == pytest.approx(1 - ss_res / ss_tot, abs=1e-12)


def test_r_squared_is_shift_invariant(rng):
    observed = rng.normal(size=(30, 2))
    predicted = observed + 0.05 * rng.normal(size=(30, 2))
    assert r_squared(predicted + 7.0, observed + 7.0) == pytest.approx(r_squared(predicted, observed), abs=1e-12)


def test_r_squared_undefined_for_constant_observations():
    with pytest.raises(UndefinedMetricError):
        r_squared(np.zeros((5, 2)), np.ones((5, 2)))


def test_mse_examples():
    x = np.arange(6.0).reshape(3, 2)
    assert mse(x, x) == 0.0
    assert mse(np.array([[2.0]]), np.array([[0.0]])) == 4.0
    assert mse(x + 0.1, x) == pytest.approx(0.01)


def test_mse_shape_check():
    with pytest.raises(ShapeError):
        mse(np.zeros((3, 2)), np.zeros((2, 3)))


def test_r_squared_one_exactly_when_mse_zero(rng):
    observed = rng.normal(size=(10, 2))
    assert mse(observed, observed) == 0.0
    assert r_squared(observed, observed) == 1.0


# ==================== TIMING / REPORT ====================

def test_timed_fit_does_not_perturb_results(rng):
    theta = rng.normal(size=(200, 10))
    xdot = theta[:, :2] @ np.array([[1.0, 0.0], [0.0, -2.0]])
    config = SolverConfig(lam=0.01, eta=0.05)
    first, seconds = timed_fit(lambda: stlsq(theta, xdot, config))
    second, _ = timed_fit(lambda: stlsq(theta, xdot, config))
    assert seconds > 0
    assert np.array_equal(first.xi, second.xi)


def test_metrics_report_row():
    report = MetricsReport("d1", "sindy", 3, cei=0.1, train_r2=0.99, train_mse=0.01)
    row = report.to_row()
    assert list(row) == list(METRICS_COLUMNS)
    assert row["test_r2"] is None


def test_metrics_report_validation():
    with pytest.raises(ParameterError):
        MetricsReport("d1", "sindy", -1)
    with pytest.raises(ParameterError):
        MetricsReport("d1", "sindy", 1, test_mse=-0.5)
