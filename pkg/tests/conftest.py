import numpy as np
import pytest

from masktune import init_model
from masktune.linalg import Rng


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


def small_model(dims=(4, 6, 5, 3), seed=7):
    return init_model(list(dims), seed=seed)


def random_batch(rng, n, dim, classes):
    x = rng.normal(size=(n, dim))
    y = rng.integers(0, classes, size=n)
    return x, y


def grad_rel_err(a, b):
    """Frobenius relative error between two gradient arrays."""
    denom = max(np.linalg.norm(b), 1e-12)
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / denom
