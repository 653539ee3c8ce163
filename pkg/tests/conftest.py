import sys

import numpy as np
import pytest

from boundary_riemann.models import builtin


@pytest.fixture(scope="session")
def linear_diag():
    return builtin("linear", {"A": [[-1.0, 0.0], [0.0, 2.0]]})


@pytest.fixture(scope="session")
def linear_coupled():
    return builtin("linear", {"A": [[-1.0, 0.5], [0.3, 2.0]]})


@pytest.fixture(scope="session")
def psys():
    return builtin("p_system", {"gamma": 2.0})


@pytest.fixture(scope="session")
def noncons():
    return builtin("noncons_demo")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
