from __future__ import annotations

import math

import networkx as nx
import numpy as np
import pytest

from service.errors import EmptyGraph, EmptyTarget, MetricError, SingleCommunity, TargetMissing
from service.graph_service import NodeFeatures, Partition, build_graph
from service.metric_service import (
    DESCRIPTOR_FIELDS,
    EcsParams,
    betweenness,
    centroid_sq_distance,
    closeness,
    community_descriptors,
    element_centric_similarity,
    evaluate_row,
    m1,
    m2,
    modularity,
    spectral_modularity,
)
from tests.helpers import random_graph, random_partition


def _nx(g):
    graph = nx.Graph()
    graph.add_nodes_from(range(g.n))
    graph.add_edges_from(g.edges)
    return graph


def test_modularity_two_triangles(two_triangles, two_triangle_partition):
    assert modularity(two_triangles, two_triangle_partition) == pytest.approx(0.5)


def test_modularity_single_community_is_zero(bridged_triangles):
    assert modularity(bridged_triangles, Partition(np.zeros(6, dtype=int))) == pytest.approx(0.0, abs=1e-12)


def test_modularity_matches_networkx_and_spectral_form(rng):
    for _ in range(20):
        g = random_graph(rng, 12)
        if g.m == 0:
            continue
        p = random_partition(rng, 12, 3)
        communities = [set(p.members(c).tolist()) for c in range(p.k)]
        expected = nx.community.modularity(_nx(g), communities)
        assert modularity(g, p) == pytest.approx(expected)
        assert spectral_modularity(g, p.membership_matrix().astype(float)) == pytest.approx(expected)


def _modularity_by_pairs(g, p) -> float:
    two_m = 2.0 * g.m
    adjacency = set(g.edges) | {(v, u) for u, v in g.edges}
    total = 0.0
    for i in range(g.n):
        for j in range(g.n):
            if p.labels[i] == p.labels[j]:
                total += float((i, j) in adjacency) - g.degree[i] * g.degree[j] / two_m
    return total / two_m


def test_modularity_matches_pairwise_sum_on_many_graphs(rng):
    checked = 0
    while checked < 100:
        n = int(rng.integers(4, 31))
        g = random_graph(rng, n, density=float(rng.uniform(0.1, 0.6)))
        if g.m == 0:
            continue
        p = random_partition(rng, n, int(rng.integers(1, 6)))
        expected = _modularity_by_pairs(g, p)
        assert modularity(g, p) == pytest.approx(expected, abs=1e-10)
        assert spectral_modularity(g, p.membership_matrix().astype(float)) == pytest.approx(expected, abs=1e-10)
        checked += 1


def test_modularity_requires_edges():
    with pytest.raises(EmptyGraph):
        modularity(build_graph(3, []), Partition(np.array([0, 1, 1])))


def test_m1_examples():
    detected = Partition(np.array([0, 1, 2, 3, 4, 4, 4]))
    assert m1([0, 1, 2, 3], detected) == pytest.approx(0.75)
    assert m1([4, 5, 6], detected) == 0.0


def test_m1_single_detected_community():
    assert m1([0, 1], Partition(np.zeros(4, dtype=int))) == 0.0


def test_m1_rejects_empty_target():
    with pytest.raises(EmptyTarget):
        m1([], Partition(np.array([0, 1])))


def test_m2_examples():
    merged = Partition(np.zeros(8, dtype=int))
    assert m2([0, 1, 2], merged) == pytest.approx(1.0)
    exact = Partition(np.array([0, 0, 0, 1, 1, 1, 1, 1]))
    assert m2([0, 1, 2], exact) == 0.0
    partial = Partition(np.array([0, 0, 1, 1, 2, 2, 2, 2]))
    # target touches {0, 1} and {2, 3}; only node 1 is an outsider
    assert m2([0, 2, 3], partial) == pytest.approx(1 / 5)


def test_m2_whole_graph_target_has_no_outsiders():
    assert m2([0, 1, 2], Partition(np.zeros(3, dtype=int))) == 0.0


def _random_target(rng, n: int):
    size = int(rng.integers(1, n + 1))
    return sorted(rng.choice(n, size=size, replace=False).tolist())


def test_m1_m2_match_set_counting(rng):
    for _ in range(50):
        n = int(rng.integers(2, 13))
        detected = random_partition(rng, n, int(rng.integers(1, 5)))
        target = _random_target(rng, n)
        inside = set(target)
        groups = [set(detected.members(c).tolist()) for c in range(detected.k)]
        touched = [group for group in groups if group & inside]
        largest = max(len(group & inside) for group in touched)
        want_m1 = (len(touched) - 1) / (max(len(groups) - 1, 1) * largest)
        want_m2 = sum(len(group - inside) for group in touched) / max(n - len(inside), 1)
        assert m1(target, detected) == pytest.approx(want_m1, abs=1e-12)
        assert m2(target, detected) == pytest.approx(want_m2, abs=1e-12)
        assert 0.0 <= m1(target, detected) <= 1.0 and 0.0 <= m2(target, detected) <= 1.0


def _ecs_oracle(a: Partition, b: Partition, alpha: float) -> float:
    def affinity(p: Partition, u: int) -> np.ndarray:
        row = np.where(p.labels == p.labels[u], alpha / p.sizes[p.labels[u]], 0.0)
        row[u] += 1.0 - alpha
        return row

    scores = [1.0 - np.abs(affinity(a, u) - affinity(b, u)).sum() / (2 * alpha) for u in range(a.n)]
    return float(np.mean(scores))


def test_ecs_merged_vs_singletons():
    merged = Partition(np.zeros(3, dtype=int))
    singletons = Partition(np.arange(3))
    assert element_centric_similarity(merged, singletons) == pytest.approx(1 / 3)


def test_ecs_identity_and_symmetry(rng):
    for _ in range(20):
        a = random_partition(rng, 15, 4)
        b = random_partition(rng, 15, 3)
        assert element_centric_similarity(a, a) == pytest.approx(1.0)
        assert element_centric_similarity(a, b) == pytest.approx(element_centric_similarity(b, a))
        assert element_centric_similarity(a, b, EcsParams(0.7)) == pytest.approx(_ecs_oracle(a, b, 0.7))


def test_ecs_matches_affinity_oracle_on_small_partitions(rng):
    for _ in range(50):
        n = int(rng.integers(2, 13))
        a = random_partition(rng, n, int(rng.integers(1, 5)))
        b = random_partition(rng, n, int(rng.integers(1, 5)))
        alpha = float(rng.uniform(0.05, 0.95))
        got = element_centric_similarity(a, b, EcsParams(alpha))
        assert got == pytest.approx(_ecs_oracle(a, b, alpha), abs=1e-10)


def test_ecs_alpha_range():
    with pytest.raises(MetricError):
        EcsParams(1.0)


def test_betweenness_path_matches_networkx(path4):
    assert betweenness(path4).tolist() == [0.0, 2.0, 2.0, 0.0]


def test_centralities_match_networkx(rng):
    for _ in range(50):
        g = random_graph(rng, int(rng.integers(2, 13)), density=0.25)
        graph = _nx(g)
        want_b = nx.betweenness_centrality(graph, normalized=False)
        want_c = nx.closeness_centrality(graph)
        assert np.allclose(betweenness(g), [want_b[u] for u in range(g.n)], rtol=0, atol=1e-9)
        assert np.allclose(closeness(g), [want_c[u] for u in range(g.n)], rtol=0, atol=1e-9)


def test_closeness_isolated_node_is_zero():
    assert closeness(build_graph(3, [(0, 1)])).tolist() == [1.0 / 2.0, 1.0 / 2.0, 0.0]


def test_centroid_sq_distance():
    p = Partition(np.array([0, 0, 1, 1, 2]))
    x = NodeFeatures(np.array([[0.0, 0.0], [0.0, 0.0], [3.0, 4.0], [3.0, 4.0], [0.0, 1.0]]))
    assert centroid_sq_distance(0, p, x) == pytest.approx((25.0 + 1.0) / 2)
    with pytest.raises(TargetMissing):
        centroid_sq_distance(3, p, x)
    with pytest.raises(SingleCommunity):
        centroid_sq_distance(0, Partition(np.zeros(5, dtype=int)), x)


def test_descriptors_bridged_triangles(bridged_triangles, two_triangle_partition):
    x = NodeFeatures(np.array([[0.0, 0.0]] * 3 + [[3.0, 4.0]] * 3))
    record = community_descriptors(bridged_triangles, two_triangle_partition, x, 0)
    nx_between = nx.betweenness_centrality(_nx(bridged_triangles), normalized=False)
    assert record.community_size == 3
    assert record.intra_edges == 3 and record.inter_edges == 1
    assert record.inter_intra_ratio == pytest.approx(1 / 3)
    assert record.ratio_defined
    assert record.mean_degree == pytest.approx(7 / 3)
    assert record.community_degree == 1.0
    assert record.community_betweenness == 0.0
    assert record.community_closeness == 1.0
    assert record.avg_centroid_sq_distance == pytest.approx(25.0)
    assert record.mean_betweenness == pytest.approx(np.mean([nx_between[u] for u in range(3)]))
    assert tuple(record.as_dict()) == DESCRIPTOR_FIELDS


def test_descriptors_flag_missing_intra_edges():
    g = build_graph(4, [(0, 1), (0, 2), (1, 2), (2, 3)])
    p = Partition(np.array([0, 0, 0, 1]))
    record = community_descriptors(g, p, NodeFeatures(np.zeros((4, 1))), 1)
    assert not record.ratio_defined
    assert math.isinf(record.inter_intra_ratio)


def test_evaluate_row(bridged_triangles, two_triangle_partition):
    detected = Partition(np.zeros(6, dtype=int))
    row = evaluate_row(bridged_triangles, two_triangle_partition, detected, 1, metrics=("q", "m1", "m2", "ecs"))
    assert row["target"] == 1 and row["k"] == 2 and row["k_detected"] == 1
    assert row["q_detected"] == pytest.approx(0.0, abs=1e-12)
    assert row["m1"] == 0.0
    assert row["m2"] == pytest.approx(1.0)
    assert "avg_centroid_sq_distance" not in row


def test_evaluate_row_errors(bridged_triangles, two_triangle_partition):
    with pytest.raises(MetricError):
        evaluate_row(bridged_triangles, two_triangle_partition, two_triangle_partition, 0, metrics=("nmi",))
    with pytest.raises(MetricError):
        evaluate_row(bridged_triangles, two_triangle_partition, two_triangle_partition, 0, metrics=("descriptors",))
    with pytest.raises(TargetMissing):
        evaluate_row(bridged_triangles, two_triangle_partition, two_triangle_partition, 2, metrics=("m1",))
