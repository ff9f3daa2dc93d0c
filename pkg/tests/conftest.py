import numpy as np
import pytest


def random_pd(rng, M, scale=1.0, cond_floor=0.1):
    A = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
    return scale * (A @ A.conj().T / M + cond_floor * np.eye(M))


def random_hermitian(rng, M):
    A = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
    return 0.5 * (A + A.conj().T)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
