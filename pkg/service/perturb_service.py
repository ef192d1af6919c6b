"""타깃 커뮤니티 은닉용 DICE / FCom-DICE 예산 기반 섭동."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Optional, Tuple, Union

import numpy as np

from service.errors import (
    EmptyCommunity,
    PerturbationError,
    SizeMismatch,
    TargetNotACommunity,
    TargetOutOfRange,
)
from service.graph_service import (
    Edge,
    Graph,
    NodeFeatures,
    Partition,
    _graph_from_canonical,
    canonical_edge,
    intra_edges,
)

logger = logging.getLogger(__name__)

METHODS = ("dice", "fcom-dice")
SKIP_FACTOR = 10
# floor() guard for products such as 0.6 * 5 that land just below an integer
FLOOR_EPS = 1e-9


@dataclass(frozen=True)
class PerturbSpec:
    target: FrozenSet[int]
    beta_b: float
    p: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "target", frozenset(int(u) for u in self.target))
        if not 0.0 <= self.beta_b <= 1.0:
            raise PerturbationError(f"beta_b must lie in [0, 1], got {self.beta_b}")
        if not 0.0 <= self.p <= 1.0:
            raise PerturbationError(f"p must lie in [0, 1], got {self.p}")
        if not self.target:
            raise TargetOutOfRange("target community is empty")


@dataclass(frozen=True)
class Budget:
    b: int
    b_del: int
    b_add: int


@dataclass(frozen=True)
class Exhaustion:
    deletion: bool = False
    addition: bool = False


@dataclass(frozen=True)
class PerturbationResult:
    graph: Graph
    features: Optional[NodeFeatures]
    deleted: Tuple[Edge, ...]
    added: Tuple[Edge, ...]
    feature_edits: Tuple[Tuple[int, int], ...]
    exhausted: Exhaustion
    budget: Budget
    method: str = "dice"

    def to_ledger(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "budget": {"b": self.budget.b, "b_del": self.budget.b_del, "b_add": self.budget.b_add},
            "deleted": [list(e) for e in self.deleted],
            "added": [list(e) for e in self.added],
            "feature_edits": [{"node": u, "community": c} for u, c in self.feature_edits],
            "exhausted": {"deletion": self.exhausted.deletion, "addition": self.exhausted.addition},
        }

    def save_ledger(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_ledger(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class CentroidIndex:
    centroids: np.ndarray
    similarity: np.ndarray = field(repr=False)

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])


def budget_from_fraction(beta_b: float, e_intra: int, p: float) -> Budget:
    """b = ⌊β_b·|E_intra|⌋, b_del = ⌊b·p⌋, b_add = b − b_del."""
    if e_intra < 0:
        raise PerturbationError(f"intra-edge count must be non-negative, got {e_intra}")
    b = int(math.floor(beta_b * e_intra + FLOOR_EPS))
    b_del = int(math.floor(b * p + FLOOR_EPS))
    return Budget(b=b, b_del=b_del, b_add=b - b_del)


def _target_array(g: Graph, target: FrozenSet[int]) -> np.ndarray:
    arr = np.array(sorted(target), dtype=np.int64)
    if arr[0] < 0 or arr[-1] >= g.n:
        bad = arr[(arr < 0) | (arr >= g.n)][0]
        raise TargetOutOfRange(f"target node {bad} not in 0..{g.n - 1}")
    return arr


def _sample_deletions(g: Graph, target: np.ndarray, b_del: int, rng: np.random.Generator) -> Tuple[List[Edge], bool]:
    # shared by both methods so the deletion draw is identical for a given seed
    candidates = intra_edges(g, target)
    take = min(b_del, len(candidates))
    if take == 0:
        return [], b_del > len(candidates)
    picks = rng.choice(len(candidates), size=take, replace=False)
    return sorted(candidates[i] for i in picks), b_del > len(candidates)


def _apply(g: Graph, deleted: List[Edge], added: List[Edge]) -> Graph:
    removed = set(deleted)
    kept = [e for e in g.edges if e not in removed]
    return _graph_from_canonical(g.n, kept + added)


def dice(g: Graph, spec: PerturbSpec, rng: Optional[np.random.Generator] = None) -> PerturbationResult:
    """Disconnect internally, connect externally.

    E_del is drawn without replacement from the target's intra edges, E_add
    uniformly from target x outside pairs that are not already edges.
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    target = _target_array(g, spec.target)
    budget = budget_from_fraction(spec.beta_b, len(intra_edges(g, target)), spec.p)

    deleted, del_exhausted = _sample_deletions(g, target, budget.b_del, rng)

    in_target = np.zeros(g.n, dtype=bool)
    in_target[target] = True
    outside = np.flatnonzero(~in_target)
    # candidate pairs (u in C*, v outside) that are not edges of the original graph
    free = g.adjacency[np.ix_(target, outside)] == 0
    rows, cols = np.nonzero(free)
    n_cand = rows.size
    take = min(budget.b_add, n_cand)
    added: List[Edge] = []
    if take:
        picks = rng.choice(n_cand, size=take, replace=False)
        added = sorted(canonical_edge(int(target[rows[i]]), int(outside[cols[i]])) for i in picks)
    exhausted = Exhaustion(deletion=del_exhausted, addition=budget.b_add > n_cand)
    if exhausted.addition:
        logger.debug("DICE addition candidates exhausted: %s of %s", n_cand, budget.b_add)

    return PerturbationResult(
        graph=_apply(g, deleted, added),
        features=None,
        deleted=tuple(deleted),
        added=tuple(added),
        feature_edits=(),
        exhausted=exhausted,
        budget=budget,
        method="dice",
    )


def community_centroids(x: NodeFeatures, p: Partition) -> CentroidIndex:
    """커뮤니티 특징 중심과 S_nc[u, i] = −‖x_u − μ_i‖² 를 계산한다."""
    if p.n != x.n:
        raise SizeMismatch(f"partition covers {p.n} nodes, features have {x.n} rows")
    counts = np.bincount(p.labels, minlength=p.k)
    if np.any(counts == 0):
        raise EmptyCommunity(f"community {int(np.flatnonzero(counts == 0)[0])} has no members")
    sums = np.zeros((p.k, x.d), dtype=np.float64)
    np.add.at(sums, p.labels, x.matrix)
    centroids = sums / counts[:, None]
    diff = x.matrix[:, None, :] - centroids[None, :, :]
    similarity = -np.einsum("ukd,ukd->uk", diff, diff)
    centroids.setflags(write=False)
    similarity.setflags(write=False)
    return CentroidIndex(centroids=centroids, similarity=similarity)


def _resolve_target(p: Partition, target: FrozenSet[int]) -> int:
    labels = {int(p.labels[u]) for u in target}
    if len(labels) != 1:
        raise TargetNotACommunity(f"target spans {len(labels)} communities")
    community = labels.pop()
    if int(p.sizes[community]) != len(target):
        raise TargetNotACommunity(
            f"target has {len(target)} nodes but community {community} has {int(p.sizes[community])}"
        )
    return community


def fcom_dice(
    g: Graph,
    x: NodeFeatures,
    p: Partition,
    spec: PerturbSpec,
    rng: Optional[np.random.Generator] = None,
    index: Optional[CentroidIndex] = None,
) -> PerturbationResult:
    """특징 공간에서 가장 가까운 커뮤니티로 외부 간선을 추가하고 노드 특징을 그 중심으로 덮어쓴다.

    Centroids and S_nc are frozen from the input features for the whole run.
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    target = _target_array(g, spec.target)
    if p.n != g.n or x.n != g.n:
        raise SizeMismatch(f"graph has {g.n} nodes, partition {p.n}, features {x.n}")
    own = _resolve_target(p, spec.target)
    index = index if index is not None else community_centroids(x, p)
    budget = budget_from_fraction(spec.beta_b, len(intra_edges(g, target)), spec.p)

    deleted, del_exhausted = _sample_deletions(g, target, budget.b_del, rng)

    # adjacency of the evolving graph restricted to target rows; additions only touch these rows
    adj_rows = g.adjacency[target].astype(bool)
    outside_mask = p.labels != own
    added: List[Edge] = []
    edits: Dict[int, int] = {}
    edit_log: List[Tuple[int, int]] = []
    skips = 0
    skip_limit = SKIP_FACTOR * target.size
    addition_exhausted = False
    while len(added) < budget.b_add:
        row = int(rng.integers(target.size))
        u = int(target[row])
        # non-neighbors outside C*, counted per destination community
        free = outside_mask & ~adj_rows[row]
        free_per_community = np.bincount(p.labels[free], minlength=p.k)
        feasible = free_per_community > 0
        if not feasible.any():
            skips += 1
            if skips >= skip_limit:
                addition_exhausted = True
                logger.debug("FCom-DICE stopped after %s consecutive infeasible draws", skips)
                break
            continue
        skips = 0
        scores = np.where(feasible, index.similarity[u], -np.inf)
        destination = int(np.argmax(scores))
        choices = np.flatnonzero(free & (p.labels == destination))
        v = int(choices[int(rng.integers(choices.size))])
        adj_rows[row, v] = True
        added.append(canonical_edge(u, v))
        edits[u] = destination
        edit_log.append((u, destination))

    features = x.with_rows({u: index.centroids[c] for u, c in edits.items()}) if edits else x
    return PerturbationResult(
        graph=_apply(g, deleted, sorted(added)),
        features=features,
        deleted=tuple(deleted),
        added=tuple(sorted(added)),
        feature_edits=tuple(edit_log),
        exhausted=Exhaustion(deletion=del_exhausted, addition=addition_exhausted),
        budget=budget,
        method="fcom-dice",
    )


def perturb(
    method: str,
    g: Graph,
    spec: PerturbSpec,
    x: Optional[NodeFeatures] = None,
    p: Optional[Partition] = None,
    rng: Optional[np.random.Generator] = None,
    index: Optional[CentroidIndex] = None,
) -> PerturbationResult:
    if method == "dice":
        result = dice(g, spec, rng)
        # DICE leaves features untouched; carry them along for downstream clustering
        return result if x is None else replace(result, features=x)
    if method == "fcom-dice":
        if x is None or p is None:
            raise PerturbationError("fcom-dice needs node features and a partition")
        return fcom_dice(g, x, p, spec, rng, index=index)
    raise PerturbationError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")

