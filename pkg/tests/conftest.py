import numpy as np
import pytest

from slgtformer.tensor import get_tape, kernels


@pytest.fixture(autouse=True)
def _clean_tape():
    get_tape().clear()
    yield
    get_tape().clear()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    prev = kernels.BACKEND
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(prev)
