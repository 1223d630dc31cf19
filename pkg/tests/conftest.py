import numpy as np
import pytest

from tiltwing.trim import build_trim_map
from tiltwing.vehicle import default_vehicle


@pytest.fixture(scope="session")
def vp():
    return default_vehicle()


@pytest.fixture(scope="session")
def coarse_map(vp):
    """Small map for unit tests; the acceptance suite builds the full grid."""
    va = np.arange(0.0, 20.0 + 1e-9, 4.0)
    gamma = np.radians(np.arange(-10.0, 10.0 + 1e-9, 5.0))
    return build_trim_map(vp, va_axis=va, gamma_axis=gamma)
