import numpy as np
import pytest
from hypothesis import settings

from openmaps.fixtures import cubic_model, random_markov_model, shift_model, tent_model


@pytest.fixture(scope="session")
def tent():
    return tent_model()


@pytest.fixture(scope="session")
def cubic():
    return cubic_model()


@pytest.fixture(scope="session")
def shift():
    return shift_model()


@pytest.fixture(scope="session")
def random_models():
    rng = np.random.default_rng(20240611)
    return [random_markov_model(rng, m_max=6) for _ in range(10)]


def brute_force_inverse_derivative(model, word, lo, hi, points=400_001):
    """Dense-sample oracle for the range of |(f^t)'|^{-1} along ``word``."""
    x = np.linspace(lo, hi, points)
    d = np.ones_like(x)
    for i in word:
        br = model.branches[i - 1]
        d *= np.abs(br.derivative(x))
        x = br(x)
    inv = 1.0 / d
    return inv.min(), inv.max()


@pytest.fixture(scope="session")
def random_affine_models():
    rng = np.random.default_rng(7)
    return [random_markov_model(rng, m_max=6, affine=True) for _ in range(10)]


settings.register_profile("repo", derandomize=True, deadline=None)
settings.load_profile("repo")
