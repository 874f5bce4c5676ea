import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from levycomp.specs import LevyMeasure, ProcessSpec, TripletSchedule

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def brownian(cov=1.0, drift=0.0, F=None, dim=1):
    return TripletSchedule.constant(drift, cov, F, dim)


def symmetric_atoms(mass):
    return LevyMeasure.atoms([-1.0, 1.0], [mass, mass])


@pytest.fixture
def bm():
    return brownian(1.0)


@pytest.fixture
def bm_pair():
    return ProcessSpec(brownian(1.0)), ProcessSpec(brownian(4.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
