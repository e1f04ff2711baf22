import numpy as np
import pytest

from blesskit.kernels import Dataset, KernelSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_gaussian(rng):
    X = rng.standard_normal((40, 3))
    return Dataset(X, np.sin(X[:, 0])), KernelSpec.gaussian(1.0)

