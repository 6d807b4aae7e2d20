import numpy as np
import pytest

from fedmix.models import ModelSpec, ParameterVector, loss_and_gradient


def finite_difference_gradient(
    theta: ParameterVector, spec: ModelSpec, X, y, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient oracle, independent of the analytic path."""
    base = np.asarray(theta.values, dtype=np.float64)
    grad = np.empty_like(base)
    for k in range(base.size):
        plus = base.copy()
        plus[k] += h
        minus = base.copy()
        minus[k] -= h
        lp, _ = loss_and_gradient(ParameterVector(plus, theta.shape_spec), spec, X, y)
        lm, _ = loss_and_gradient(ParameterVector(minus, theta.shape_spec), spec, X, y)
        grad[k] = (lp - lm) / (2.0 * h)
    return grad


def max_relative_error(approx: np.ndarray, exact: np.ndarray) -> float:
    """Per-coordinate relative error with a scale-aware floor.

    The floor (1e-3 of the gradient's max magnitude) keeps coordinates that
    are tiny relative to the gradient from turning central-difference
    truncation noise (~1e-10 absolute at h = 1e-5) into spurious relative
    error.
    """
    floor = 1e-3 * max(float(np.max(np.abs(exact))), 1e-8)
    scale = np.maximum(np.abs(exact), floor)
    return float(np.max(np.abs(approx - exact) / scale))


@pytest.fixture
def linear_spec():
    return ModelSpec(architecture="linear", input_dim=4, num_classes=3)


@pytest.fixture
def mlp_spec():
    return ModelSpec(
        architecture="mlp1", input_dim=4, num_classes=3, hidden_dim=6, activation="tanh"
    )
