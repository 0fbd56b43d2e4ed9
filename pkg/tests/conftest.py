import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cslab.arithmetic import IrrationalSpec
from cslab.circle_maps import CircleMap
from cslab.potentials import Potential

settings.register_profile("cslab", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("cslab")


@pytest.fixture
def golden():
    return IrrationalSpec.golden()


@pytest.fixture
def rotation():
    return CircleMap.rotation()


@pytest.fixture
def sinusoidal():
    return CircleMap.sinusoidal(0.3)


@pytest.fixture
def sawtooth():
    return Potential.sawtooth()


@pytest.fixture
def rng():
    return np.random.default_rng(20260)
