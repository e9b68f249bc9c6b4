import numpy as np
import pytest

from pmelab.measures import ModelParams, build_ball_grid


@pytest.fixture(scope="session")
def p11():
    return ModelParams(1, 1.0)


@pytest.fixture(scope="session")
def grid11(p11):
    return build_ball_grid(p11, "full_1d", 24)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
