import numpy as np
import pytest

from levferro.config import default_config
from levferro.trap import MagnetParams, TrapGeometry

# acceptance lines collected by test_acceptance.py, printed at session end
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture(scope="session")
def magnet():
    return MagnetParams(20.78e-6, 7430.0, 6.91e5)


@pytest.fixture(scope="session")
def geom():
    return TrapGeometry(2.5e-3, 9.80674)


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
