import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from acoustomech.circuit import desk_params
from acoustomech.linear_response import reference_system

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TWO_PI = 2.0 * np.pi


@pytest.fixture()
def system():
    return reference_system()


@pytest.fixture()
def desk():
    return desk_params()


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
