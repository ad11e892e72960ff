import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from overpinn import expr
from overpinn.expr import Context

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def ac_ctx():
    return Context(("t", "x"), {"u": ()})


@pytest.fixture
def ns_ctx():
    return Context(("t", "x", "y"), {"u": (), "v": (), "p": (), "omega": ()}, ["nu", "rho"])


@pytest.fixture(scope="session")
def ac_system():
    from overpinn.training import system_path
    return expr.load(system_path("allen_cahn"))


@pytest.fixture(scope="session")
def ns_system():
    from overpinn.training import system_path
    return expr.load(system_path("navier_stokes"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
