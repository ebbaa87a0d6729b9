import numpy as np
import pytest

from ncpla.config import SystemConfig, db_to_linear
from ncpla.constellation import design_constellation


@pytest.fixture
def cfg128():
    return SystemConfig(N=128, L_m=4, L_t=2, gamma_m=db_to_linear(10.0))


@pytest.fixture
def con10(cfg128):
    return design_constellation(cfg128)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record a one-line verdict for the acceptance summary."""

    def _report(name, passed, detail=""):
        line = f"{name}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
