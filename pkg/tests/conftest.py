import numpy as np
import pytest

from bilred import Heat2dConfig, heat2d, random_stable_system


@pytest.fixture(scope="session")
def heat4():
    return heat2d(Heat2dConfig(k=4))


@pytest.fixture(scope="session")
def heat10():
    return heat2d(Heat2dConfig(k=10))


@pytest.fixture(scope="session")
def rand6():
    return random_stable_system(6, m=1, p=1, q=1, bilinear_scale=0.2, seed=7)


def make_random(seed, n=6, m=1, p=1, q=1, scale=0.2):
    return random_stable_system(n, m=m, p=p, q=q, bilinear_scale=scale,
                                seed=seed)


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = max(np.linalg.norm(b.ravel()), 1e-300)
    return np.linalg.norm((a - b).ravel()) / denom
