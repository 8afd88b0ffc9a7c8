import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pregc.graph import Graph, normalize_adjacency, sbm_generate, two_block_centers

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_graph(n, p=0.5, f=3, seed=0, labels=None):
    rng = np.random.default_rng(seed)
    raw = np.triu((rng.random((n, n)) < p).astype(float), 1)
    raw = raw + raw.T
    return Graph(normalize_adjacency(raw, True), rng.standard_normal((n, f)), labels)


@pytest.fixture
def sbm():
    return sbm_generate([30, 30], 0.5, 0.02, two_block_centers(4, 4.0), 1.0, seed=0)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield
