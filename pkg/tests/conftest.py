import numpy as np
import pytest
from hypothesis import settings

from geoflow import kernels

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

BACKENDS = sorted(kernels.available_backends())


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Run the test once per available kernel backend."""
    with kernels.backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit_rows(rng, n):
    g = rng.standard_normal((n, 3))
    return g / np.linalg.norm(g, axis=1, keepdims=True)
