import numpy as np
import pytest

from pqnsim.polarization import haar_unitary, pure_state


def random_density(rng: np.random.Generator, rank: int = 4) -> np.ndarray:
    """Random two-photon density operator: a mixture of Haar-random kets."""
    weights = rng.dirichlet(np.ones(rank))
    rho = np.zeros((4, 4), dtype=complex)
    for w in weights:
        z = rng.normal(size=4) + 1j * rng.normal(size=4)
        rho += w * pure_state(z)
    return rho


@pytest.fixture
def rng():
    return np.random.default_rng(20231104)


__all__ = ["random_density", "haar_unitary"]
