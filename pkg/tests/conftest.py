import numpy as np
import pytest

from gdsp.data import random_geometric_graph
from gdsp.gaussian import GaussianMeasure
from gdsp.graph import Graph, build_laplacian


def random_spd(rng, n, floor=0.1):
    m = rng.standard_normal((n, n))
    return m @ m.T / n + floor * np.eye(n)


def random_gaussian(rng, n, mean_scale=1.0):
    return GaussianMeasure(mean_scale * rng.standard_normal(n), random_spd(rng, n))


def random_sd(seed, n):
    return build_laplacian(random_geometric_graph(n, np.random.default_rng(seed)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def p2():
    return Graph(np.array([[0.0, 1.0], [1.0, 0.0]]))


@pytest.fixture
def k3():
    return Graph(np.ones((3, 3)) - np.eye(3))
