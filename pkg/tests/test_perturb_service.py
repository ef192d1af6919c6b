from __future__ import annotations

import json

import numpy as np
import pytest

from service.errors import PerturbationError, SizeMismatch, TargetNotACommunity, TargetOutOfRange
from service.graph_service import NodeFeatures, Partition, build_graph, intra_edges
from service.perturb_service import PerturbSpec, budget_from_fraction, community_centroids, dice, fcom_dice, perturb


@pytest.mark.parametrize(
    "beta_b, e_intra, p, expected",
    [
        (0.5, 21, 0.75, (10, 7, 3)),
        (0.0, 21, 0.5, (0, 0, 0)),
        (1.0, 9, 0.5, (9, 4, 5)),
        (2 / 3, 3, 0.5, (2, 1, 1)),
    ],
)
def test_budget_from_fraction(beta_b, e_intra, p, expected):
    budget = budget_from_fraction(beta_b, e_intra, p)
    assert (budget.b, budget.b_del, budget.b_add) == expected


def test_spec_validation():
    with pytest.raises(PerturbationError):
        PerturbSpec(target={0}, beta_b=1.5)
    with pytest.raises(TargetOutOfRange):
        PerturbSpec(target=set(), beta_b=0.5)


def test_dice_zero_budget_is_identity(bridged_triangles):
    result = dice(bridged_triangles, PerturbSpec(target={0, 1, 2}, beta_b=0.0, seed=1))
    assert result.graph == bridged_triangles
    assert result.deleted == () and result.added == ()


def test_dice_target_out_of_range(bridged_triangles):
    with pytest.raises(TargetOutOfRange):
        dice(bridged_triangles, PerturbSpec(target={0, 17}, beta_b=0.5))


def test_dice_one_deletion_one_addition(bridged_triangles):
    target = {0, 1, 2}
    original_intra = set(intra_edges(bridged_triangles, target))
    for seed in range(10):
        result = dice(bridged_triangles, PerturbSpec(target=target, beta_b=2 / 3, p=0.5, seed=seed))
        assert len(result.deleted) == 1 and len(result.added) == 1
        assert set(result.deleted) <= original_intra
        (u, v), = result.added
        assert (u in target) != (v in target)
        assert not bridged_triangles.has_edge(u, v)
        assert result.graph.m == bridged_triangles.m
        untouched = [e for e in bridged_triangles.edges if e not in result.deleted]
        assert set(result.graph.edges) == set(untouched) | set(result.added)


def test_dice_addition_exhaustion():
    # both target nodes already touch every outside node
    g = build_graph(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3)])
    result = dice(g, PerturbSpec(target={0, 1}, beta_b=1.0, p=0.0, seed=0))
    assert result.budget.b_add == 1
    assert result.added == ()
    assert result.exhausted.addition


def test_dice_is_deterministic(bridged_triangles):
    spec = PerturbSpec(target={3, 4, 5}, beta_b=1.0, p=0.5, seed=9)
    assert dice(bridged_triangles, spec).to_ledger() == dice(bridged_triangles, spec).to_ledger()


def test_centroids_single_member_communities():
    x = NodeFeatures(np.arange(12, dtype=float).reshape(4, 3))
    index = community_centroids(x, Partition(np.arange(4)))
    assert np.array_equal(index.centroids, x.matrix)
    assert np.all(np.diag(index.similarity) == 0.0)
    assert np.all(index.similarity <= 0.0)


def test_centroids_identical_features():
    x = NodeFeatures(np.ones((6, 2)))
    index = community_centroids(x, Partition(np.array([0, 0, 1, 1, 2, 2])))
    assert np.all(index.similarity == index.similarity[0, 0])


def test_centroids_match_naive_mean(rng):
    x = NodeFeatures(rng.normal(size=(10, 4)))
    p = Partition(np.array([0, 1, 2, 0, 1, 2, 0, 1, 2, 0]))
    index = community_centroids(x, p)
    for community in range(3):
        rows = [x.matrix[u] for u in range(10) if p.labels[u] == community]
        assert np.allclose(index.centroids[community], np.mean(rows, axis=0))
    u, c = 4, 2
    assert index.similarity[u, c] == pytest.approx(-np.sum((x.matrix[u] - index.centroids[c]) ** 2))


def test_centroids_size_mismatch():
    with pytest.raises(SizeMismatch):
        community_centroids(NodeFeatures(np.zeros((3, 2))), Partition(np.array([0, 1])))


def _three_blobs():
    edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (6, 7), (7, 8), (6, 8)]
    g = build_graph(9, edges)
    p = Partition(np.repeat([0, 1, 2], 3))
    x = NodeFeatures(np.array([[0.0, 0.0]] * 3 + [[1.0, 0.0]] * 3 + [[10.0, 0.0]] * 3))
    return g, p, x


def test_fcom_dice_picks_nearest_community():
    g, p, x = _three_blobs()
    result = fcom_dice(g, x, p, PerturbSpec(target={0, 1, 2}, beta_b=1.0, p=0.0, seed=4))
    assert len(result.added) == 3
    for u, v in result.added:
        outside = v if u < 3 else u
        assert p.labels[outside] == 1
    for node, community in result.feature_edits:
        assert community == 1
        assert np.array_equal(result.features.matrix[node], [1.0, 0.0])
    edited = {node for node, _ in result.feature_edits}
    for node in set(range(9)) - edited:
        assert np.array_equal(result.features.matrix[node], x.matrix[node])


def test_fcom_dice_destination_is_argmax_over_feasible():
    g, p, x = _three_blobs()
    index = community_centroids(x, p)
    result = fcom_dice(g, x, p, PerturbSpec(target={0, 1, 2}, beta_b=1.0, p=0.0, seed=2), index=index)
    for node, community in result.feature_edits:
        assert index.similarity[node, community] == index.similarity[node, 1:].max()


def test_fcom_dice_all_deletion_matches_dice():
    g, p, x = _three_blobs()
    spec = PerturbSpec(target={0, 1, 2}, beta_b=1.0, p=1.0, seed=5)
    fcom = fcom_dice(g, x, p, spec)
    baseline = dice(g, spec)
    assert fcom.features == x
    assert fcom.added == ()
    assert fcom.deleted == baseline.deleted
    assert fcom.graph == baseline.graph


def test_fcom_dice_zero_addition_keeps_features():
    g, p, x = _three_blobs()
    result = fcom_dice(g, x, p, PerturbSpec(target={3, 4, 5}, beta_b=0.0, seed=1))
    assert result.features == x


def test_fcom_dice_requires_whole_community():
    g, p, x = _three_blobs()
    with pytest.raises(TargetNotACommunity):
        fcom_dice(g, x, p, PerturbSpec(target={0, 1}, beta_b=0.5))
    with pytest.raises(TargetNotACommunity):
        fcom_dice(g, x, p, PerturbSpec(target={2, 3}, beta_b=0.5))


def test_fcom_dice_saturation_sets_exhaustion():
    # target {0, 1} already adjacent to the only outside community
    g = build_graph(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
    p = Partition(np.array([0, 0, 1, 1]))
    x = NodeFeatures(np.zeros((4, 2)))
    result = fcom_dice(g, x, p, PerturbSpec(target={0, 1}, beta_b=1.0, p=0.0, seed=0))
    assert result.added == ()
    assert result.exhausted.addition


def test_edge_accounting_and_locality(small_lfr, small_lfr_features):
    g, p = small_lfr.graph, small_lfr.partition
    target = frozenset(p.members(0).tolist())
    for method in ("dice", "fcom-dice"):
        result = perturb(method, g, PerturbSpec(target=target, beta_b=0.6, p=0.5, seed=3), x=small_lfr_features, p=p)
        assert result.graph.m == g.m - len(result.deleted) + len(result.added)
        assert not set(result.deleted) & set(result.added)
        assert len(result.deleted) <= result.budget.b_del
        assert len(result.added) <= result.budget.b_add
        far = [e for e in g.edges if e[0] not in target and e[1] not in target]
        assert set(far) <= set(result.graph.edges)


def test_perturb_dispatch_and_ledger(tmp_path, two_triangles):
    spec = PerturbSpec(target={0, 1, 2}, beta_b=1.0, p=0.5, seed=0)
    x = NodeFeatures(np.zeros((6, 2)))
    result = perturb("dice", two_triangles, spec, x=x)
    assert result.features == x
    path = tmp_path / "ledger.json"
    result.save_ledger(path)
    ledger = json.loads(path.read_text(encoding="utf-8"))
    assert ledger["method"] == "dice"
    assert ledger["budget"] == {"b": 3, "b_del": 1, "b_add": 2}
    with pytest.raises(PerturbationError):
        perturb("gradient", two_triangles, spec)
    with pytest.raises(PerturbationError):
        perturb("fcom-dice", two_triangles, spec)

