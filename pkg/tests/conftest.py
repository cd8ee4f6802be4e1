import numpy as np
import pytest
from hypothesis import settings

from bobylev.charfun import RadialGrid, gaussian_charfn, stable_charfn

settings.register_profile("bobylev", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("bobylev")


@pytest.fixture(scope="session")
def grid():
    return RadialGrid.default()


@pytest.fixture(scope="session")
def fine_grid():
    """Reaches far below the default r_min, for sups attained as r -> 0."""
    return RadialGrid.log_spaced(r_min=1e-8, n_log=384)


@pytest.fixture(scope="session")
def w1(grid):
    return stable_charfn(grid, 1.0, 1.0)


@pytest.fixture(scope="session")
def gauss(grid):
    return gaussian_charfn(grid)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import VERDICTS

    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[k])
