"""평가 지표: 모듈러리티(합/행렬 형태), M1, M2, ECS, 중심거리, 커뮤니티 기술자."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterable, Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import shortest_path

from service.errors import (
    DimensionMismatch,
    EmptyGraph,
    EmptyTarget,
    MetricError,
    NodeOutOfRange,
    SingleCommunity,
    SizeMismatch,
    TargetMissing,
)
from service.graph_service import Graph, NodeFeatures, Partition, boundary_edges, intra_edges, quotient_graph

logger = logging.getLogger(__name__)

ECS_ALPHA = 0.9


@dataclass(frozen=True)
class EcsParams:
    alpha: float = ECS_ALPHA

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise MetricError(f"ECS alpha must lie in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class DescriptorRecord:
    avg_centroid_sq_distance: float
    community_size: int
    inter_intra_ratio: float
    mean_degree: float
    community_degree: float
    mean_betweenness: float
    community_betweenness: float
    mean_closeness: float
    community_closeness: float
    intra_edges: int
    inter_edges: int
    ratio_defined: bool

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


DESCRIPTOR_FIELDS = tuple(DescriptorRecord.__dataclass_fields__)


def _require_edges(g: Graph) -> None:
    if g.m == 0:
        raise EmptyGraph("modularity is undefined on a graph without edges")


def _require_cover(g: Graph, p: Partition) -> None:
    if p.n != g.n:
        raise SizeMismatch(f"partition covers {p.n} nodes, graph has {g.n}")


def modularity_matrix(g: Graph) -> np.ndarray:
    """B = A − k̂k̂ᵀ/2m."""
    _require_edges(g)
    deg = g.degree.astype(np.float64)
    return g.adjacency - np.outer(deg, deg) / (2.0 * g.m)


def modularity(g: Graph, p: Partition) -> float:
    """Newman 모듈러리티. 순서쌍 합(대각 귀무항 포함)을 커뮤니티별 합으로 계산한다.

    Σ_c [L_c/m − (D_c/2m)²] with L_c the intra edges and D_c the degree sum of c.
    """
    _require_edges(g)
    _require_cover(g, p)
    arr = g.edge_array
    lu = p.labels[arr[:, 0]]
    same = lu == p.labels[arr[:, 1]]
    internal = np.bincount(lu[same], minlength=p.k).astype(np.float64)
    degree_sum = np.bincount(p.labels, weights=g.degree.astype(np.float64), minlength=p.k)
    two_m = 2.0 * g.m
    return float(np.sum(internal / g.m - (degree_sum / two_m) ** 2))


def spectral_modularity(g: Graph, c: np.ndarray) -> float:
    """(1/2m)·Tr(CᵀBC) for hard (one-hot) or soft (row-stochastic) memberships."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != g.n:
        raise DimensionMismatch(f"membership matrix has shape {c.shape}, graph has {g.n} nodes")
    _require_edges(g)
    two_m = 2.0 * g.m
    deg = g.degree.astype(np.float64)
    kc = deg @ c
    trace = float(np.sum(c * (g.sparse_adjacency @ c)))
    return (trace - float(kc @ kc) / two_m) / two_m


def _target_nodes(target: Iterable[int], n: Optional[int] = None) -> np.ndarray:
    arr = np.unique(np.fromiter((int(u) for u in target), dtype=np.int64))
    if arr.size == 0:
        raise EmptyTarget("target community is empty")
    if n is not None and (arr[0] < 0 or arr[-1] >= n):
        raise NodeOutOfRange(f"target node outside 0..{n - 1}")
    return arr


def m1(target: Iterable[int], detected: Partition) -> float:
    """C⋆ 가 탐지된 커뮤니티들에 얼마나 흩어졌는지 (0: 온전, 1: 최대 분산)."""
    nodes = _target_nodes(target, detected.n)
    overlap = np.bincount(detected.labels[nodes], minlength=detected.k)
    touched = int(np.count_nonzero(overlap))
    denominator = max(detected.k - 1, 1) * int(overlap.max())
    return (touched - 1) / denominator


def m2(target: Iterable[int], detected: Partition, n: Optional[int] = None) -> float:
    """C⋆ 와 겹치는 탐지 커뮤니티가 외부 노드를 얼마나 흡수했는지 ("hidden in the crowd")."""
    n = detected.n if n is None else n
    nodes = _target_nodes(target, n)
    overlap = np.bincount(detected.labels[nodes], minlength=detected.k)
    touched = overlap > 0
    outsiders = int(np.sum(detected.sizes[touched] - overlap[touched]))
    return outsiders / max(n - nodes.size, 1)


def element_centric_similarity(a: Partition, b: Partition, params: EcsParams = EcsParams()) -> float:
    """Element-centric similarity of two hard partitions.

    Node u's affinity in a partition puts α/|c(u)| on every member of its
    cluster plus (1−α) on u itself. With sizes s_a, s_b and overlap I of u's
    two clusters, the L1 distance has the closed form
    I·|α/s_a − α/s_b| + (s_a − I)·α/s_a + (s_b − I)·α/s_b,
    and the node score is 1 − L1/(2α).
    """
    if a.n != b.n:
        raise SizeMismatch(f"partitions cover {a.n} and {b.n} nodes")
    alpha = params.alpha
    size_a = a.sizes[a.labels].astype(np.float64)
    size_b = b.sizes[b.labels].astype(np.float64)
    joint = a.labels * b.k + b.labels
    overlap = np.bincount(joint)[joint].astype(np.float64)
    wa = alpha / size_a
    wb = alpha / size_b
    l1 = overlap * np.abs(wa - wb) + (size_a - overlap) * wa + (size_b - overlap) * wb
    return float(np.mean(1.0 - l1 / (2.0 * alpha)))


def _centroids(p: Partition, x: NodeFeatures) -> np.ndarray:
    if p.n != x.n:
        raise SizeMismatch(f"partition covers {p.n} nodes, features have {x.n} rows")
    sums = np.zeros((p.k, x.d), dtype=np.float64)
    np.add.at(sums, p.labels, x.matrix)
    return sums / p.sizes[:, None]


def centroid_sq_distance(target_id: int, p: Partition, x: NodeFeatures) -> float:
    """d̄²(C⋆): 다른 모든 커뮤니티 중심까지의 제곱 유클리드 거리 평균."""
    if p.k < 2:
        raise SingleCommunity("centroid distance needs at least two communities")
    if not 0 <= target_id < p.k:
        raise TargetMissing(f"community {target_id} not in 0..{p.k - 1}")
    centroids = _centroids(p, x)
    diff = centroids - centroids[target_id]
    sq = np.einsum("kd,kd->k", diff, diff)
    return float(np.delete(sq, target_id).mean())


def betweenness(g: Graph) -> np.ndarray:
    """Brandes betweenness, unnormalized pair counts on the undirected graph."""
    n = g.n
    neighbors = [nb.tolist() for nb in g.neighbors]
    scores = [0.0] * n
    for source in range(n):
        stack = []
        preds = [[] for _ in range(n)]
        sigma = [0.0] * n
        dist = [-1] * n
        sigma[source] = 1.0
        dist[source] = 0
        queue = deque([source])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in neighbors[v]:
                if dist[w] < 0:
                    queue.append(w)
                    dist[w] = dist[v] + 1
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [0.0] * n
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != source:
                scores[w] += delta[w]
    # each unordered pair is counted from both endpoints
    return np.asarray(scores, dtype=np.float64) / 2.0


def closeness(g: Graph) -> np.ndarray:
    """Closeness over the reachable set, scaled by (reachable−1)/(n−1) for fragmented graphs."""
    n = g.n
    if n == 1:
        return np.zeros(1, dtype=np.float64)
    dist = shortest_path(g.sparse_adjacency, method="D", directed=False, unweighted=True)
    finite = np.isfinite(dist)
    reach = finite.sum(axis=1) - 1
    total = np.where(finite, dist, 0.0).sum(axis=1)
    out = np.zeros(n, dtype=np.float64)
    ok = total > 0
    out[ok] = (reach[ok] / total[ok]) * (reach[ok] / (n - 1))
    return out


@dataclass(frozen=True)
class GraphCentrality:
    """Node-level centralities of one graph, reused across target communities."""

    degree: np.ndarray
    betweenness: np.ndarray
    closeness: np.ndarray

    @classmethod
    def of(cls, g: Graph) -> "GraphCentrality":
        return cls(degree=g.degree.astype(np.float64), betweenness=betweenness(g), closeness=closeness(g))


def community_descriptors(
    g: Graph,
    p: Partition,
    x: NodeFeatures,
    target_id: int,
    centrality: Optional[GraphCentrality] = None,
) -> DescriptorRecord:
    """타깃 커뮤니티의 은닉 가능성 기술자를 계산한다.

    Super-node measures are taken on the unweighted quotient graph.
    """
    _require_cover(g, p)
    if not 0 <= target_id < p.k:
        raise TargetMissing(f"community {target_id} not in 0..{p.k - 1}")
    members = p.members(target_id)
    centrality = centrality if centrality is not None else GraphCentrality.of(g)
    quotient = quotient_graph(g, p)
    q_between = betweenness(quotient)
    q_close = closeness(quotient)

    n_intra = len(intra_edges(g, members))
    n_inter = len(boundary_edges(g, members))
    ratio_defined = n_intra > 0
    ratio = n_inter / n_intra if ratio_defined else math.inf
    if not ratio_defined:
        logger.debug("community %s has no intra edges; inter/intra ratio flagged", target_id)
    distance = centroid_sq_distance(target_id, p, x) if p.k >= 2 else 0.0

    return DescriptorRecord(
        avg_centroid_sq_distance=distance,
        community_size=int(members.size),
        inter_intra_ratio=ratio,
        mean_degree=float(centrality.degree[members].mean()),
        community_degree=float(quotient.degree[target_id]),
        mean_betweenness=float(centrality.betweenness[members].mean()),
        community_betweenness=float(q_between[target_id]),
        mean_closeness=float(centrality.closeness[members].mean()),
        community_closeness=float(q_close[target_id]),
        intra_edges=n_intra,
        inter_edges=n_inter,
        ratio_defined=ratio_defined,
    )


EVALUATE_METRICS = ("q", "m1", "m2", "ecs", "descriptors")


def evaluate_row(
    g: Graph,
    truth: Partition,
    detected: Partition,
    target_id: int,
    metrics: Sequence[str] = EVALUATE_METRICS,
    x: Optional[NodeFeatures] = None,
    ecs: EcsParams = EcsParams(),
) -> Dict[str, Any]:
    """평가 CLI 한 줄: 정답 분할의 target_id 커뮤니티를 기준으로 요청된 지표를 모은다."""
    unknown = [name for name in metrics if name not in EVALUATE_METRICS]
    if unknown:
        raise MetricError(f"unknown metrics: {', '.join(unknown)}")
    _require_cover(g, truth)
    _require_cover(g, detected)
    if not 0 <= target_id < truth.k:
        raise TargetMissing(f"community {target_id} not in 0..{truth.k - 1}")
    members = truth.members(target_id)
    row: Dict[str, Any] = {"target": target_id, "k": truth.k, "k_detected": detected.k}
    if "q" in metrics:
        row["q_truth"] = modularity(g, truth)
        row["q_detected"] = modularity(g, detected)
    if "m1" in metrics:
        row["m1"] = m1(members, detected)
    if "m2" in metrics:
        row["m2"] = m2(members, detected, g.n)
    if "ecs" in metrics:
        row["ecs"] = element_centric_similarity(truth, detected, ecs)
    if "descriptors" in metrics:
        if x is None:
            raise MetricError("descriptors need node features")
        row.update(community_descriptors(g, truth, x, target_id).as_dict())
    return row
