import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from invfeas.model import InverterParams

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def inverter_params(draw):
    """Parameter sets over the ranges of the randomized checks."""
    return InverterParams(
        r=draw(st.floats(0.01, 10.0)),
        l=draw(st.floats(0.1e-3, 50e-3)),
        omega=2 * math.pi * 60,
        e_mag=draw(st.floats(50.0, 400.0)),
        i_max=draw(st.floats(1.0, 50.0)),
    )


@st.composite
def disk_current(draw, i_max):
    r = i_max * math.sqrt(draw(st.floats(0.0, 1.0)))
    a = draw(st.floats(0.0, 2 * math.pi))
    return np.array([r * math.cos(a), r * math.sin(a)])


@pytest.fixture
def base_params():
    return InverterParams()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
