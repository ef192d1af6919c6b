from __future__ import annotations

import numpy as np
import pytest

from service.errors import DimensionMismatch, DuplicateEdge, GraphError, NodeOutOfRange, ParseError, SelfLoop
from service.graph_service import (
    NodeFeatures,
    Partition,
    boundary_edges,
    build_graph,
    intra_edges,
    largest_connected_component,
    load_edge_list,
    load_features,
    load_id_map,
    load_labeled_edge_list,
    load_partition,
    quotient_graph,
    save_edge_list,
    save_features,
    save_id_map,
    save_partition,
    subgraph,
)
from tests.helpers import random_graph, random_partition


def test_build_graph_path_degrees():
    g = build_graph(3, [(0, 1), (1, 2)])
    assert g.m == 2
    assert g.degree.tolist() == [1, 2, 1]
    assert int(g.degree.sum()) == 2 * g.m


def test_build_graph_rejects_self_loop():
    with pytest.raises(SelfLoop):
        build_graph(2, [(0, 0)])


def test_build_graph_rejects_duplicate_including_reversed():
    with pytest.raises(DuplicateEdge):
        build_graph(4, [(0, 1), (0, 1)])
    with pytest.raises(DuplicateEdge):
        build_graph(4, [(0, 1), (1, 0)])


def test_build_graph_rejects_out_of_range():
    with pytest.raises(NodeOutOfRange):
        build_graph(3, [(0, 3)])


def test_edges_are_canonical_and_sorted():
    g = build_graph(4, [(3, 1), (2, 0), (1, 0)])
    assert g.edges == ((0, 1), (0, 2), (1, 3))
    assert g.has_edge(3, 1)


def test_intra_edges_triangle(bridged_triangles):
    assert intra_edges(bridged_triangles, {0, 1, 2}) == [(0, 1), (0, 2), (1, 2)]
    assert intra_edges(bridged_triangles, set()) == []
    assert boundary_edges(bridged_triangles, {0, 1, 2}) == [(2, 3)]


def test_intra_edges_match_filter(rng):
    for _ in range(20):
        g = random_graph(rng, 8)
        community = set(rng.choice(8, size=4, replace=False).tolist())
        expected = sorted(e for e in g.edges if e[0] in community and e[1] in community)
        assert intra_edges(g, community) == expected


def test_intra_edges_out_of_range(two_triangles):
    with pytest.raises(NodeOutOfRange):
        intra_edges(two_triangles, {0, 9})


def test_largest_component_is_connected():
    g = build_graph(7, [(0, 1), (2, 3), (3, 4), (4, 2), (5, 6)])
    lcc, keep = largest_connected_component(g)
    assert keep.tolist() == [2, 3, 4]
    assert lcc.n == 3 and lcc.m == 3


def test_largest_component_tie_prefers_smallest_id():
    g = build_graph(6, [(4, 5), (1, 2), (0, 3)])
    _, keep = largest_connected_component(g)
    assert keep.tolist() == [0, 3]


def test_subgraph_relabels():
    g = build_graph(5, [(0, 4), (4, 2), (1, 3)])
    sub, keep = subgraph(g, [2, 4, 0])
    assert keep.tolist() == [0, 2, 4]
    assert sub.edges == ((0, 2), (1, 2))


def test_quotient_graph_two_triangles(bridged_triangles, two_triangle_partition):
    q = quotient_graph(bridged_triangles, two_triangle_partition)
    assert q.n == 2
    assert q.edges == ((0, 1),)


def test_quotient_graph_matches_brute_force(rng):
    for _ in range(50):
        n = int(rng.integers(2, 13))
        g = random_graph(rng, n)
        p = random_partition(rng, n, 4)
        expected = {
            (min(p.labels[u], p.labels[v]), max(p.labels[u], p.labels[v]))
            for u, v in g.edges
            if p.labels[u] != p.labels[v]
        }
        q = quotient_graph(g, p)
        assert q.n == p.k
        assert set(q.edges) == expected


def test_partition_canonical_first_appearance():
    p = Partition(np.array([7, 7, 3, 9, 3]))
    assert p.labels.tolist() == [0, 0, 1, 2, 1]
    assert p.k == 3
    assert p.sizes.tolist() == [2, 2, 1]
    assert p.members(1).tolist() == [2, 4]
    assert np.array_equal(p.membership_matrix().sum(axis=1), np.ones(5))


def test_edge_list_round_trip_keeps_isolated_node(tmp_path):
    g = build_graph(5, [(0, 1), (1, 2)])
    path = tmp_path / "g.edges"
    save_edge_list(g, path)
    loaded = load_edge_list(path)
    assert loaded == g
    assert loaded.n == 5
    save_edge_list(loaded, tmp_path / "again.edges")
    assert (tmp_path / "again.edges").read_bytes() == path.read_bytes()


def test_edge_list_collapses_reversed_pairs(tmp_path):
    path = tmp_path / "dup.edges"
    path.write_text("0\t1\n1\t0\n1\t2\n2\t2\n", encoding="utf-8")
    g = load_edge_list(path)
    assert g.edges == ((0, 1), (1, 2))


def test_edge_list_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.edges"
    path.write_text("# n=3\n0\t1\n0 a\n", encoding="utf-8")
    with pytest.raises(ParseError) as info:
        load_edge_list(path)
    assert info.value.line == 3


def test_labeled_edge_list_lexicographic_ids(tmp_path):
    path = tmp_path / "named.tsv"
    path.write_text("carol\talice\nbob\talice\nalice\tbob\n", encoding="utf-8")
    g, ids = load_labeled_edge_list(path)
    assert ids == ("alice", "bob", "carol")
    assert g.edges == ((0, 1), (0, 2))
    save_id_map(ids, tmp_path / "named.ids")
    assert load_id_map(tmp_path / "named.ids") == ids


def test_features_round_trip_and_dimension_check(tmp_path):
    x = NodeFeatures(np.random.default_rng(1).normal(size=(4, 3)))
    path = tmp_path / "x.csv"
    save_features(x, path)
    assert load_features(path, n=4) == x
    with pytest.raises(DimensionMismatch):
        load_features(path, n=5)


def test_features_reject_non_finite():
    with pytest.raises(GraphError):
        NodeFeatures(np.array([[0.0, np.nan]]))


def test_partition_round_trip(tmp_path):
    p = Partition(np.array([0, 1, 1, 2, 0]))
    path = tmp_path / "p.partition"
    save_partition(p, path)
    assert load_partition(path, n=5) == p
    with pytest.raises(DimensionMismatch):
        load_partition(path, n=6)
