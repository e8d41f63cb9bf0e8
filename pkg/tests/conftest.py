import numpy as np
import pytest

from bsderisk import LsmcContext, RegressionBasis, TimeGrid, simulate


@pytest.fixture(scope="session")
def ctx50():
    """Workhorse context: T=1, 50 steps, 50k paths, degree-4 basis."""
    grid = TimeGrid(1.0, 50)
    ens = simulate(grid, d=1, n_paths=50_000, seed=123)
    return LsmcContext(grid, ens, RegressionBasis(4))


@pytest.fixture(scope="session")
def ctx20():
    """Cheap context for check-level tests: 20 steps, 10k paths."""
    grid = TimeGrid(1.0, 20)
    ens = simulate(grid, d=1, n_paths=10_000, seed=777)
    return LsmcContext(grid, ens, RegressionBasis(4))


@pytest.fixture(scope="session")
def b1(ctx50):
    """Terminal Brownian level B_1 on the workhorse ensemble."""
    return ctx50.ensemble.values[:, 50, 0]


def stderr(values) -> float:
    values = np.asarray(values)
    return float(np.std(values) / np.sqrt(values.size))
