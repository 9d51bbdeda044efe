import numpy as np
import pytest

from ballcover.geometry import ModelSpace


def all_test_spaces():
    return [
        ModelSpace.euclidean(1),
        ModelSpace.euclidean(2),
        ModelSpace.euclidean(3),
        ModelSpace.sphere(1),
        ModelSpace.sphere(2),
        ModelSpace.hyperbolic(2),
        ModelSpace.torus([1.0, 1.3]),
        ModelSpace.torus([2.0, 6.0]),
    ]


@pytest.fixture(params=all_test_spaces(), ids=lambda s: f"{s.kind}{s.dim}")
def space(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
