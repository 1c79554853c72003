import numpy as np
import pytest

from safefl.config import preset
from safefl.energy import FLModelSpec, WorkerCaps


@pytest.fixture(scope="session")
def mnist():
    return FLModelSpec(alpha=1.8e6, m_bits=2.51 * 8e6, eta=0.5, epsilon0=0.04, f_star=1.0, deadline_h=13.0)


def make_caps(**kw):
    base = dict(f_max=3e9, p_max=2.0, c_flops_per_cycle=4, sigma_cap=1e-28, bandwidth=20e6,
                distance_km=0.1, n_samples=1000, data_variance=0.5)
    base.update(kw)
    return WorkerCaps(**base)


@pytest.fixture
def caps():
    return make_caps()


@pytest.fixture
def static5():
    return preset("static5")


@pytest.fixture
def dynamic5():
    return preset("dynamic5")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
