import numpy as np
import pytest

from bilopt.pipeline import Dataset


def make_blobs(n=100, width=4, sep=5.0, pos_frac=0.5, seed=0, shift=0.0):
    """Two Gaussian class-conditional blobs, optionally mean-shifted."""
    rng = np.random.default_rng(seed)
    n_pos = int(round(pos_frac * n))
    y = np.array([1] * n_pos + [0] * (n - n_pos))
    y = y[rng.permutation(n)]
    X = rng.normal(0.0, 1.0, size=(n, width)) + shift
    X[y == 1] += sep / np.sqrt(width)
    return X, y


@pytest.fixture
def blob_data():
    return make_blobs()


def _three_projects():
    """Three separable projects with moderate domain shift."""
    return [
        Dataset(f"proj{i}", *make_blobs(n=120, seed=10 + i, shift=0.5 * i))
        for i in range(3)
    ]


@pytest.fixture
def three_projects():
    return _three_projects()


@pytest.fixture(scope="module")
def three_projects_cls():
    return _three_projects()
