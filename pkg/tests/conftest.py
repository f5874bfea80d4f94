import numpy as np
import pytest

from helpers import SMALL, scenario


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)


@pytest.fixture(scope="session")
def small_scn():
    return scenario(SMALL, seed=0)
