import math

import pytest
from hypothesis import settings

from tdho.grid import Grid
from tdho.oscillator import ConstantK0, OscillatorModel

settings.register_profile("tdho", deadline=None, max_examples=30)
settings.load_profile("tdho")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def free_inside_model():
    """m=1, k=3/16 (lam=1/4), r0=1, free inside."""
    return OscillatorModel.from_exponent()


@pytest.fixture(scope="session")
def oscillating_model():
    # k0 chosen so the inner motion is a quarter period on [0, 1]
    return OscillatorModel(m=1.0, k=0.1875, r0=1.0, inner=ConstantK0((math.pi / 2) ** 2))


@pytest.fixture(scope="session")
def scatter_model():
    """m=1/8, lam=1/4: the model used for the scattering defaults."""
    return OscillatorModel(m=0.125, k=0.0234375, r0=1.0)


@pytest.fixture(scope="session")
def grid1d():
    return Grid(1, 1024, 32.0)
