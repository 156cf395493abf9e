import numpy as np
import pytest

from relsparse import SimConfig, fit_behavioral, simulate


@pytest.fixture(scope="session")
def small_data():
    return simulate(SimConfig(n=200, T=3, K=2, seed=0))


@pytest.fixture(scope="session")
def small_fit(small_data):
    return fit_behavioral(small_data)


@pytest.fixture(scope="session")
def default_data():
    return simulate(SimConfig(seed=0))


@pytest.fixture(scope="session")
def default_fit(default_data):
    return fit_behavioral(default_data)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
