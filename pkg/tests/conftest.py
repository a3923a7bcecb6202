import numpy as np
import pytest

from teleport.measures import DiscreteMeasure


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def random_measure(rng, n, dim=1, mass=1.0):
    w = rng.random(n) + 0.05
    return DiscreteMeasure(rng.random((n, dim)), mass * w / w.sum())
