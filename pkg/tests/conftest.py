import numpy as np
import pytest

from chaoslab.equilibrium import solve_thermal_equilibrium
from chaoslab.grid import Grid1D, GridDensity
from chaoslab.kernels import ConfinementSpec, KernelSpec

_ACCEPTANCE_LINES = []


def record_acceptance(line: str) -> None:
    """Keep one line per acceptance criterion for the end-of-run summary."""
    print(line)
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def log_kernel():
    return KernelSpec.log()


@pytest.fixture(scope="session")
def unit_uniform():
    """Uniform density on [0, 1] sitting inside a slightly larger window."""
    grid = Grid1D(-1.0, 2.0, 300)
    return GridDensity.uniform(grid, 0.0, 1.0)


@pytest.fixture(scope="session")
def log_equilibrium():
    grid = Grid1D(-6.0, 6.0, 256)
    V = ConfinementSpec.quadratic(2.0)
    res = solve_thermal_equilibrium(KernelSpec.log(), V, 1.0, grid, tol=1e-12)
    return grid, V, res
