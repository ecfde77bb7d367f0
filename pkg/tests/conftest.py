import numpy as np
import pytest

from mfpicture.freespace import FreeFlow
from mfpicture.systems import SystemSpec, load_system

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


@pytest.fixture(scope="session")
def harmonic():
    return load_system(SystemSpec("harmonic+quartic", {"epsilon": 0.0}))


@pytest.fixture(scope="session")
def quartic():
    return load_system("harmonic+quartic")


@pytest.fixture(scope="session")
def free_particle():
    return load_system("free+harmonic")


@pytest.fixture(scope="session")
def aniso():
    return load_system("anisotropic-2d")


@pytest.fixture(scope="session")
def hflow(harmonic):
    return FreeFlow(harmonic)


@pytest.fixture(scope="session")
def qflow(quartic):
    return FreeFlow(quartic)


@pytest.fixture(scope="session")
def pflow(free_particle):
    return FreeFlow(free_particle)
