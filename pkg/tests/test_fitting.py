import numpy as np
import pytest

from levferro.errors import ConvergenceError
from levferro.fitting import levenberg_marquardt, numerical_jacobian


def test_linear_problem_matches_normal_equations(gen):
    x = np.linspace(0, 1, 40)
    sigma = 0.1
    y = 2.0 + 3.0 * x + sigma * gen.standard_normal(x.size)
    A = np.c_[np.ones_like(x), x] / sigma
    fit = levenberg_marquardt(lambda p: (y - p[0] - p[1] * x) / sigma, [0.0, 0.0], names=("a", "b"))
    expected, *_ = np.linalg.lstsq(A, y / sigma, rcond=None)
    np.testing.assert_allclose(fit.values, expected, rtol=1e-8)
    np.testing.assert_allclose(fit.covariance, np.linalg.inv(A.T @ A), rtol=1e-6)
    assert fit.dof == 38
    assert fit["b"] == pytest.approx(fit.values[1])
    assert not fit.degenerate


def test_exponential_converges_from_poor_start():
    t = np.linspace(0, 5, 50)
    y = 4.0 * np.exp(-t / 1.3)
    fit = levenberg_marquardt(lambda p: y - p[0] * np.exp(-t / p[1]), [1.0, 5.0])
    np.testing.assert_allclose(fit.values, [4.0, 1.3], rtol=1e-8)


def test_unconstrained_parameter_gets_infinite_sigma():
    x = np.linspace(0, 1, 10)
    fit = levenberg_marquardt(lambda p: x - p[0] + 0.0 * p[1], [0.2, 1.0])
    assert fit.degenerate
    assert np.isfinite(fit.sigmas[0])
    assert np.isinf(fit.sigmas[1])


def test_numerical_jacobian():
    J = numerical_jacobian(lambda p: np.array([p[0] ** 2, p[0] * p[1]]), np.array([2.0, 3.0]))
    np.testing.assert_allclose(J, [[4.0, 0.0], [3.0, 2.0]], rtol=1e-6)


def test_nonfinite_start_rejected():
    with pytest.raises(ConvergenceError):
        levenberg_marquardt(lambda p: np.array([np.nan, 1.0]), [0.0])
