import numpy as np
import pytest

from pavedl.pms.synthetic import generate_synthetic, simulate


@pytest.fixture(scope="session")
def sections():
    return generate_synthetic(60, rng=11)


@pytest.fixture(scope="session")
def sim():
    return simulate(300, rng=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
