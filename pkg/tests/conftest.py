import math

import numpy as np
import pytest

from leray_alpha.control import HUMConfig
from leray_alpha.dynamics import ControlMask, TimeGrid
from leray_alpha.experiments import testbed as make_testbed
from leray_alpha.nonlinear import FixedPointConfig
from leray_alpha.spectral import build_basis


@pytest.fixture(scope="session")
def basis8():
    return build_basis(8, 1)


@pytest.fixture(scope="session")
def basis16():
    return build_basis(16, 5)


@pytest.fixture(scope="session")
def basis32():
    return build_basis(32, 10)


@pytest.fixture(scope="session")
def bed():
    return make_testbed()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def half_mask8():
    return ControlMask.rectangle(8, (0.0, math.pi), (0.0, 2 * math.pi))


@pytest.fixture(scope="session")
def fp_cfg():
    return FixedPointConfig(hum=HUMConfig(epsilon=1e-5))


@pytest.fixture(scope="session")
def grid100():
    return TimeGrid(1.0, 100)



_ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def acceptance_lines():
    """criterion id -> result line, echoed in the terminal summary."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for cid in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(_ACCEPTANCE_LINES[cid])
