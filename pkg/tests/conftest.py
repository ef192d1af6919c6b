from __future__ import annotations

import numpy as np
import pytest

from service.graph_service import Graph, NodeFeatures, Partition, build_graph
from service.lfr_service import FeatureGenParams, LfrParams, generate_features, generate_lfr
from tests.helpers import clique_edges

TRIANGLES = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]


@pytest.fixture
def two_triangles() -> Graph:
    return build_graph(6, TRIANGLES)


@pytest.fixture
def two_triangle_partition() -> Partition:
    return Partition(np.array([0, 0, 0, 1, 1, 1]))


@pytest.fixture
def bridged_triangles() -> Graph:
    return build_graph(6, TRIANGLES + [(2, 3)])


@pytest.fixture
def path4() -> Graph:
    return build_graph(4, [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def two_cliques() -> Graph:
    return build_graph(10, clique_edges(range(5)) + clique_edges(range(5, 10)))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


SMALL_LFR = LfrParams(
    n=120,
    avg_degree=8,
    k_max=20,
    s_min=20,
    s_max=40,
    mu=0.1,
    mixing_tolerance=0.05,
)


@pytest.fixture(scope="session")
def small_lfr():
    return generate_lfr(SMALL_LFR, seed=7)


@pytest.fixture(scope="session")
def small_lfr_features(small_lfr) -> NodeFeatures:
    return generate_features(small_lfr.partition, FeatureGenParams(d=8, sigma_c=5.0, seed=7))
