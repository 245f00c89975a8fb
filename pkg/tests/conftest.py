import os
import sys
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np
import pytest

from src.Dataset import CovariateKind, validate_dataset


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the Monte-Carlo acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte-Carlo runs, enabled with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def sgl_objective(y, A, slices, grouped, lam, lam_g, coef):
    residual = y - A @ coef
    value = 0.5 * residual @ residual / len(y) + lam * np.abs(coef).sum()
    for block, is_grouped in zip(slices, grouped):
        if is_grouped:
            value += lam_g * np.linalg.norm(coef[block])
    return value


def proximal_gradient_oracle(y, A, slices, grouped, lam, lam_g, iterations=20000):
    """
    Accelerated proximal gradient with restarts on the plain sparse-group lasso objective.
    """
    n = len(y)
    L = np.linalg.eigvalsh(A.T @ A / n)[-1]
    step = 1.0 / L

    def prox(v):
        out = np.sign(v) * np.maximum(np.abs(v) - step * lam, 0.0)
        for block, is_grouped in zip(slices, grouped):
            if is_grouped:
                norm = np.linalg.norm(out[block])
                out[block] = 0.0 if norm == 0.0 else out[block] * max(0.0, 1.0 - step * lam_g / norm)
        return out

    x = np.zeros(A.shape[1])
    z = x.copy()
    t = 1.0
    value = sgl_objective(y, A, slices, grouped, lam, lam_g, x)
    for _ in range(iterations):
        x_new = prox(z + step * A.T @ (y - A @ z) / n)
        new_value = sgl_objective(y, A, slices, grouped, lam, lam_g, x_new)
        if new_value > value:
            z, t = x.copy(), 1.0
            continue
        t_new = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        z = x_new + (t - 1.0) / t_new * (x_new - x)
        if np.max(np.abs(x_new - x)) < 1e-15:
            x = x_new
            break
        x, t, value = x_new, t_new, new_value
    return x


def naive_interaction_design(X, U, j):
    """
    Triple loop construction of [X_-j | X_-j * u_1 | ... | X_-j * u_q].
    """
    n, p = X.shape
    q = U.shape[1]
    others = [k for k in range(p) if k != j]
    W = np.zeros((n, (p - 1) * (q + 1)))
    for h in range(q + 1):
        for i, k in enumerate(others):
            for r in range(n):
                W[r, h * (p - 1) + i] = X[r, k] if h == 0 else X[r, k] * U[r, h - 1]
    return W


def sample_gaussian_dataset(omega, n, q=1, seed=0):
    """
    Zero-mean Gaussian responses with precision omega and independent binary covariates.
    """
    rng = np.random.default_rng(seed)
    sigma = np.linalg.inv(omega)
    X = rng.multivariate_normal(np.zeros(omega.shape[0]), sigma, size=n)
    U = rng.integers(0, 2, size=(n, q)).astype(float)
    return validate_dataset(X, U, [CovariateKind.BINARY] * q)


@pytest.fixture
def small_dataset():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((40, 3))
    U = np.column_stack([rng.integers(0, 2, 40), rng.standard_normal(40)]).astype(float)
    return validate_dataset(X, U, [CovariateKind.BINARY, CovariateKind.CONTINUOUS])


@pytest.fixture
def edge_dataset():
    omega = np.array([[1.0, -0.4, 0.0], [-0.4, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return sample_gaussian_dataset(omega, n=2000, q=1, seed=5)
