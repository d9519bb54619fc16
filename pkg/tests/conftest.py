import numpy as np
import pytest

from nbdeblur import gaussian_kernel, make_phantom, spectral_of_kernel


@pytest.fixture
def rng():
    return np.random.default_rng(20240810)


@pytest.fixture
def small_phantom():
    return make_phantom(32, 32, ramp=False)


@pytest.fixture
def small_blur():
    kernel = gaussian_kernel(5, 1.5)
    return kernel, spectral_of_kernel(kernel, 32, 32)
