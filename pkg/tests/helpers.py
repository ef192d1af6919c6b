from __future__ import annotations

import itertools

import numpy as np

from service.graph_service import Graph, Partition, build_graph
from service.stats_service import ExperimentRecord


def random_graph(rng: np.random.Generator, n: int, density: float = 0.4) -> Graph:
    pairs = [(u, v) for u, v in itertools.combinations(range(n), 2) if rng.random() < density]
    return build_graph(n, pairs)


def random_partition(rng: np.random.Generator, n: int, k: int) -> Partition:
    return Partition(rng.integers(0, k, size=n))


def clique_edges(nodes):
    return list(itertools.combinations(nodes, 2))


RECORD_DEFAULTS = dict(
    dataset="lfr", mu=0.1, s_min=10, sigma_c=1.0, beta_b=0.5, p=0.5, method="dice", realization=0, target=0,
    seed=1, k=5, k_detected=5, m1=0.1, m2=0.1, ecs=0.9, q_before=0.6, q_after=0.5, m1_before=0.0,
    m2_before=0.0, b=10, b_del=5, b_add=5, n_deleted=5, n_added=5, exhausted_deletion=False,
    exhausted_addition=False, avg_centroid_sq_distance=30.0, community_size=40, inter_intra_ratio=0.2,
    mean_degree=10.0, community_degree=3.0, mean_betweenness=12.0, community_betweenness=1.5,
    mean_closeness=0.4, community_closeness=0.7, intra_edges=150, inter_edges=30, ratio_defined=True,
)


def record(**changes) -> ExperimentRecord:
    return ExperimentRecord(**{**RECORD_DEFAULTS, **changes})
