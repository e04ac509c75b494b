import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cpselect.regression import RegressionDataset

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_dataset(X, y, id="d", intercept=None):
    X = np.asarray(X, dtype=float)
    if intercept is None:
        intercept = bool(np.all(X[:, 0] == 1.0))
    return RegressionDataset(id, X, np.asarray(y, dtype=float), intercept=intercept)


def random_dataset(rng, N, d, id="d", hetero=False):
    X = np.column_stack([np.ones(N), rng.normal(size=(N, d - 1))])
    scale = 1.0 + np.abs(X[:, 1]) if hetero and d > 1 else 1.0
    y = X @ rng.normal(size=d) + scale * rng.normal(size=N)
    return RegressionDataset(id, X, y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
