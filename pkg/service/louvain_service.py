"""Louvain 모듈러리티 최대화와 합의(consensus) Louvain."""

from __future__ import annotations

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from service.errors import EmptyGraph, MetricError
from service.graph_service import Graph, Partition

logger = logging.getLogger(__name__)

CONSENSUS_RUNS = 50
CONSENSUS_TAU = 0.3
# gains closer than this are treated as ties so float noise cannot trigger a move
GAIN_EPS = 1e-12
MAX_LEVELS = 64


def _local_moves(w: csr_matrix, rng: np.random.Generator) -> Tuple[np.ndarray, bool]:
    n = w.shape[0]
    strength = np.asarray(w.sum(axis=1)).ravel()
    two_m = float(strength.sum())
    labels = np.arange(n)
    totals = strength.copy()
    indptr, indices, data = w.indptr, w.indices, w.data
    improved = False
    moved = True
    while moved:
        moved = False
        for i in rng.permutation(n):
            current = labels[i]
            k_i = strength[i]
            links: Dict[int, float] = {}
            for idx in range(indptr[i], indptr[i + 1]):
                j = indices[idx]
                if j != i:
                    links[labels[j]] = links.get(labels[j], 0.0) + data[idx]
            totals[current] -= k_i
            best = current
            best_gain = links.get(current, 0.0) - totals[current] * k_i / two_m
            for community, k_in in links.items():
                gain = k_in - totals[community] * k_i / two_m
                if gain > best_gain + GAIN_EPS:
                    best, best_gain = community, gain
            totals[best] += k_i
            if best != current:
                labels[i] = best
                moved = True
                improved = True
    return labels, improved


def _aggregate(w: csr_matrix, labels: np.ndarray) -> Tuple[csr_matrix, np.ndarray]:
    _, dense = np.unique(labels, return_inverse=True)
    dense = dense.reshape(-1)
    k = int(dense.max()) + 1
    n = labels.shape[0]
    proj = csr_matrix((np.ones(n), (np.arange(n), dense)), shape=(n, k))
    merged = (proj.T @ w @ proj).tocsr()
    merged.sort_indices()
    return merged, dense


def louvain_weighted(w: csr_matrix, rng: Optional[np.random.Generator] = None) -> Partition:
    """가중 대칭 행렬에 대한 2단계 Louvain. 대각 성분은 내부 가중치의 2배로 해석한다."""
    rng = rng if rng is not None else np.random.default_rng()
    w = csr_matrix(w, dtype=np.float64)
    if w.shape[0] != w.shape[1]:
        raise MetricError(f"weight matrix must be square, got {w.shape}")
    if w.sum() <= 0:
        raise EmptyGraph("Louvain needs positive total edge weight")
    membership = np.arange(w.shape[0])
    level = w
    for depth in range(MAX_LEVELS):
        labels, improved = _local_moves(level, rng)
        if not improved:
            break
        level, dense = _aggregate(level, labels)
        membership = dense[membership]
        logger.debug("louvain level %s: %s communities", depth, level.shape[0])
    return Partition(membership)


def louvain(g: Graph, rng: Optional[np.random.Generator] = None) -> Partition:
    if g.m == 0:
        raise EmptyGraph("Louvain needs at least one edge")
    return louvain_weighted(g.sparse_adjacency, rng)


def coassignment(partitions: List[Partition]) -> csr_matrix:
    """Fraction of runs in which each node pair shares a community (sparse, diagonal 1)."""
    n = partitions[0].n
    total = csr_matrix((n, n), dtype=np.float64)
    for part in partitions:
        onehot = csr_matrix((np.ones(n), (np.arange(n), part.labels)), shape=(n, part.k))
        total = total + onehot @ onehot.T
    return (total / len(partitions)).tocsr()


def consensus_louvain(
    g: Graph,
    runs: int = CONSENSUS_RUNS,
    tau: float = CONSENSUS_TAU,
    rng: Optional[np.random.Generator] = None,
) -> Partition:
    """여러 번의 Louvain 결과를 공동배정 빈도로 합의한다.

    Pairs co-assigned in at least ``tau`` of the runs are linked, connected
    components of that agreement graph become communities, and a component
    whose mean internal agreement falls below ``tau`` is re-clustered once.
    """
    if runs < 1:
        raise MetricError(f"runs must be at least 1, got {runs}")
    if not 0.0 < tau <= 1.0:
        raise MetricError(f"tau must lie in (0, 1], got {tau}")
    if g.m == 0:
        raise EmptyGraph("consensus clustering needs at least one edge")
    rng = rng if rng is not None else np.random.default_rng()
    seeds = rng.integers(0, 2**63 - 1, size=runs)
    partitions = [louvain(g, np.random.default_rng(int(s))) for s in seeds]
    agreement = coassignment(partitions)

    kept = agreement.multiply(agreement >= tau).tocsr()
    kept.setdiag(0.0)
    kept.eliminate_zeros()
    _, comp = connected_components(kept, directed=False)

    labels = comp.astype(np.int64)
    next_label = int(labels.max()) + 1
    reclustered = 0
    for component in np.unique(comp):
        nodes = np.flatnonzero(comp == component)
        if nodes.size < 2:
            continue
        block = agreement[nodes][:, nodes]
        pairs = nodes.size * (nodes.size - 1)
        mean_agreement = (block.sum() - block.diagonal().sum()) / pairs
        if mean_agreement >= tau:
            continue
        sub = kept[nodes][:, nodes]
        sub_labels = louvain_weighted(sub, rng).labels
        labels[nodes] = next_label + sub_labels
        next_label += int(sub_labels.max()) + 1
        reclustered += 1
    if reclustered:
        logger.info("consensus re-clustered %s low-agreement components", reclustered)
    return Partition(labels)


def singleton_partition(n: int) -> Partition:
    return Partition(np.arange(n))

