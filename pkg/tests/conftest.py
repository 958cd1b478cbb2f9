import numpy as np
import pytest

from skdvlab.grid import make_grid
from skdvlab.noise import KernelSpec


@pytest.fixture(scope="session")
def grid():
    """Default production grid: L=100, N=1024."""
    return make_grid(100.0, 1024)


@pytest.fixture(scope="session")
def grid_small():
    """Cheaper grid for ensemble-heavy tests."""
    return make_grid(100.0, 512)


@pytest.fixture(scope="session")
def kernel(grid):
    """Default smoothing kernel: gaussian amplitude 1, width 2."""
    return KernelSpec.gaussian(grid, 1.0, 2.0)


@pytest.fixture(scope="session")
def kernel_small(grid_small):
    return KernelSpec.gaussian(grid_small, 1.0, 2.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
