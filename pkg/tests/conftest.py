import datetime as dt

import numpy as np
import pytest

from epictrl.epi_core import EpidemicParams

# calibrated Italy second-wave parameter set used across the suite
ITALY_PARAMS = EpidemicParams(
    omega=0.0547, beta=0.5425, gamma=0.0873, delta=0.3425,
    lambda1=0.0999, lambda2=0.0501, lambda3=38.8542,
    kappa1=0.0021, kappa2=0.0125, kappa3=66.6652, N=60_480_000,
)
ITALY_LATENTS = (341_570.0, 103_778.0)
ITALY_ANCHORS = (351_000.0, 290_000.0, 39_000.0)  # Q0, R0, D0
ITALY_START = dt.date(2020, 11, 1)


@pytest.fixture
def italy_params():
    return ITALY_PARAMS


@pytest.fixture
def italy_x0():
    e0, i0 = ITALY_LATENTS
    q0, r0, d0 = ITALY_ANCHORS
    s0 = ITALY_PARAMS.N - (e0 + i0 + q0 + r0 + d0)
    return np.array([s0, e0, i0, q0, r0, d0, 0.0])
