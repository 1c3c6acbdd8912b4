import numpy as np
import pytest

from pehopt.femodel import ModelSettings, build_device
from pehopt.geometry import ShapeParams
from pehopt.modal import solve_modes


@pytest.fixture(scope="session")
def coarse():
    """Cheap discretisation used wherever mesh accuracy is not under test."""
    return ModelSettings(elements=(4, 4))


@pytest.fixture(scope="session")
def shape():
    return ShapeParams(L=0.3, l=0.5, H=0.2)


@pytest.fixture(scope="session")
def device(shape):
    return build_device(shape, ModelSettings(elements=(6, 6)))


@pytest.fixture(scope="session")
def reduced(device):
    return solve_modes(device, 5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
