from __future__ import annotations

import numpy as np
import pytest

from service.errors import EmptyGraph, MetricError
from service.graph_service import Partition, build_graph
from service.louvain_service import coassignment, consensus_louvain, louvain, singleton_partition
from service.metric_service import element_centric_similarity, modularity
from tests.helpers import clique_edges, random_graph

TRUTH = Partition(np.repeat([0, 1], 5))


def test_louvain_separates_two_cliques(two_cliques):
    assert louvain(two_cliques, np.random.default_rng(0)) == TRUTH


def test_louvain_recovers_ring_of_cliques():
    edges = []
    for c in range(6):
        edges += clique_edges(range(5 * c, 5 * c + 5))
        edges.append((5 * c + 4, (5 * c + 5) % 30))
    found = louvain(build_graph(30, edges), np.random.default_rng(2))
    assert found == Partition(np.repeat(np.arange(6), 5))


def test_louvain_beats_singletons(rng):
    for _ in range(10):
        g = random_graph(rng, 20, density=0.2)
        if g.m == 0:
            continue
        found = louvain(g, np.random.default_rng(1))
        assert modularity(g, found) >= modularity(g, singleton_partition(g.n)) - 1e-12


def test_louvain_requires_edges():
    with pytest.raises(EmptyGraph):
        louvain(build_graph(3, []))


def test_coassignment_fractions():
    a = Partition(np.array([0, 0, 1]))
    b = Partition(np.array([0, 1, 1]))
    agreement = coassignment([a, b]).toarray()
    assert np.allclose(np.diag(agreement), 1.0)
    assert agreement[0, 1] == pytest.approx(0.5)
    assert agreement[1, 2] == pytest.approx(0.5)
    assert agreement[0, 2] == 0.0


def test_consensus_is_deterministic_for_a_seed(small_lfr):
    g = small_lfr.graph
    a = consensus_louvain(g, runs=5, rng=np.random.default_rng(3))
    b = consensus_louvain(g, runs=5, rng=np.random.default_rng(3))
    assert a == b


def test_consensus_single_run_on_cliques(two_cliques):
    assert consensus_louvain(two_cliques, runs=1, rng=np.random.default_rng(0)) == TRUTH


def test_consensus_parameter_checks(two_cliques):
    with pytest.raises(MetricError):
        consensus_louvain(two_cliques, runs=0)
    with pytest.raises(MetricError):
        consensus_louvain(two_cliques, tau=0.0)


def test_consensus_is_no_worse_than_its_worst_run(small_lfr):
    g, truth = small_lfr.graph, small_lfr.partition
    runs = 5
    seeds = np.random.default_rng(3).integers(0, 2**63 - 1, size=runs)
    singles = [element_centric_similarity(truth, louvain(g, np.random.default_rng(int(s)))) for s in seeds]
    agreed = consensus_louvain(g, runs=runs, rng=np.random.default_rng(3))
    assert element_centric_similarity(truth, agreed) >= min(singles) - 1e-12
