import numpy as np
import pytest

import dynheat as dh

HORIZON = 1.0


@pytest.fixture(scope="session")
def domain():
    return dh.DomainConfig(length=1.0, n_cells=64)


@pytest.fixture(scope="session")
def region(domain):
    return dh.ControlRegion.validated([[0.3, 0.8]], domain)


@pytest.fixture(scope="session")
def times_full():
    return dh.TimeSet(horizon=HORIZON, intervals=((0.0, HORIZON),))


@pytest.fixture(scope="session")
def coeffs():
    return dh.CoefficientPair.constant(0.25, 0.2, HORIZON)


@pytest.fixture(scope="session")
def coeffs_piecewise():
    a = dh.PiecewiseConstant((0.0, 0.25, 0.5, 1.0), (0.3, -0.1, 0.2))
    b = dh.PiecewiseConstant((0.0, 0.5, 1.0), (0.25, 0.1))
    return dh.CoefficientPair(a=a, b=b)


@pytest.fixture(scope="session")
def basis(domain):
    return dh.eigendecompose(dh.assemble(domain))


@pytest.fixture(scope="session")
def basis128():
    return dh.eigendecompose(dh.assemble(dh.DomainConfig(1.0, 128)))


@pytest.fixture(scope="session")
def basis256():
    return dh.eigendecompose(dh.assemble(dh.DomainConfig(1.0, 256)))


def random_state(rng, n_modes, time_stamp=0.0):
    return dh.ModeState(rng.standard_normal(n_modes), time_stamp=time_stamp)
