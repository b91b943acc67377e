import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from belgreeks.models import GBM, SvjParams, make_svj, make_svjj
from belgreeks.stochastic_core import NormalMarks

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


# parameter set of the stochastic-volatility experiments
SV_PARAMS = dict(r=0.0, rho=-0.7, kappa=4.0, theta=0.08, eta=0.6, sigma0_sq=0.1, intensity=1.0,
                 jump_law=NormalMarks(-0.1, 0.1))


@pytest.fixture
def gbm():
    return GBM(s0=100.0, sigma=0.2, r=0.0)


@pytest.fixture
def svj():
    return make_svj(SvjParams(**SV_PARAMS))


@pytest.fixture
def svjj():
    return make_svjj(SvjParams(gamma=0.4, **SV_PARAMS))


def combined_ok(a, b, k=3.0, extra=0.0):
    return abs(a.estimate - b.estimate) <= k * np.hypot(a.stderr, b.stderr) + extra
