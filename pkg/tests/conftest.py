import numpy as np
import pytest
from hypothesis import settings

from netctl.network import LinearNetwork

settings.register_profile("netctl", max_examples=40, deadline=None)
settings.load_profile("netctl")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def integrator():
    """Two-step integrator: u(0) reaches x_1 at T=2, u(1) reaches x_2."""
    return LinearNetwork(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]), np.eye(2))


def random_stable_net(rng, n=6, m=2, p=3, scale=0.9):
    A = rng.standard_normal((n, n))
    A *= scale / max(np.abs(np.linalg.eigvals(A)))
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    return LinearNetwork(A, B, C)


@pytest.fixture
def small_net(rng):
    return random_stable_net(rng)
