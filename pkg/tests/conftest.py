import numpy as np
import pytest

from obslab.grid import CoefficientField, Grid1D, TimeGrid
from obslab.spectral import dirichlet_eigenpairs


@pytest.fixture(scope="session")
def pi_grid():
    return Grid1D(np.pi, 400)


@pytest.fixture(scope="session")
def q_zero(pi_grid):
    return CoefficientField.zero(pi_grid)


@pytest.fixture(scope="session")
def sine_basis(q_zero):
    return dirichlet_eigenpairs(q_zero, 16)


@pytest.fixture(scope="session")
def fine_grid():
    return Grid1D(np.pi, 2000)


@pytest.fixture(scope="session")
def fine_basis(fine_grid):
    return dirichlet_eigenpairs(CoefficientField.zero(fine_grid), 10)


@pytest.fixture(scope="session")
def wave_tau2pi():
    return TimeGrid(2 * np.pi, 1500)
