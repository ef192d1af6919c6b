"""LFR 벤치마크 그래프와 정렬된 가우시안 노드 특징 생성."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple, Union

import numpy as np

from service.errors import EmptyGraph, EmptySupport, InfeasibleParams, RewireBudgetExceeded, SizeMismatch
from service.graph_service import (
    Edge,
    Graph,
    NodeFeatures,
    Partition,
    _graph_from_canonical,
    canonical_edge,
    save_edge_list,
    save_features,
    save_partition,
)

logger = logging.getLogger(__name__)

# fixed offsets for sub-stream splitting of one master seed
DEGREE_STREAM = 11
SIZE_STREAM = 23
ASSIGN_STREAM = 37
WIRING_STREAM = 41
FEATURE_STREAM = 53

MAX_SIZE_ATTEMPTS = 1000
MAX_ASSIGN_ROUNDS = 50
REPAIR_TRIES_PER_EDGE = 10

RngLike = Union[np.random.Generator, int, None]


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


def _as_rng(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class LfrParams:
    n: int = 1000
    avg_degree: float = 25.0
    k_max: int = 100
    alpha: float = -2.0
    beta: float = -1.1
    s_min: int = 10
    s_max: Optional[int] = None
    mu: float = 0.1
    mixing_tolerance: float = 0.03
    max_rewire_iters: Optional[int] = None

    @property
    def community_max(self) -> int:
        # one above k_max so a member of full degree still fits at small mu
        return self.s_max if self.s_max is not None else min(self.k_max + 1, self.n)

    def validate(self) -> None:
        if self.n < 2:
            raise InfeasibleParams(f"N must be at least 2, got {self.n}")
        if not 0.0 <= self.mu < 1.0:
            raise InfeasibleParams(f"mu must lie in [0, 1), got {self.mu}")
        if self.alpha >= 0 or self.beta >= 0:
            raise InfeasibleParams("power-law exponents alpha and beta must be negative")
        if not 1 <= self.k_max <= self.n - 1:
            raise InfeasibleParams(f"k_max must lie in [1, N-1], got {self.k_max}")
        if not 1.0 <= self.avg_degree <= self.k_max:
            raise InfeasibleParams(f"avg_degree {self.avg_degree} outside [1, k_max]")
        if self.s_min > self.community_max:
            raise InfeasibleParams(f"s_min {self.s_min} exceeds s_max {self.community_max}")
        if self.community_max < self.k_max:
            raise InfeasibleParams(
                f"s_max {self.community_max} is smaller than k_max {self.k_max}; "
                "high-degree members could not be wired internally"
            )
        if 2 * self.s_min > self.n:
            raise InfeasibleParams(f"N={self.n} cannot hold two communities of size >= {self.s_min}")


@dataclass(frozen=True)
class FeatureGenParams:
    d: int = 32
    sigma_c: float = 1.0
    sigma: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.d < 1:
            raise InfeasibleParams(f"feature dimension must be >= 1, got {self.d}")
        if self.sigma_c <= 0 or self.sigma <= 0:
            raise InfeasibleParams("sigma_c and sigma must be positive")


@dataclass(frozen=True)
class LfrBenchmark:
    graph: Graph
    partition: Partition
    mixing: float
    degree_floor: int


def _power_law_weights(exponent: float, x_min: int, x_max: int) -> Tuple[np.ndarray, np.ndarray]:
    if x_min < 1 or x_min > x_max:
        raise EmptySupport(f"power-law support [{x_min}, {x_max}] is empty")
    support = np.arange(x_min, x_max + 1, dtype=np.float64)
    weights = support ** exponent
    return support, weights / weights.sum()


def sample_power_law(exponent: float, x_min: int, x_max: int, count: int, rng: RngLike = None) -> np.ndarray:
    """이산 지지집합 [x_min, x_max] 위에서 p(x) ∝ x^exponent 를 역CDF 로 샘플링한다."""
    support, probs = _power_law_weights(exponent, x_min, x_max)
    if count <= 0:
        return np.zeros(0, dtype=np.int64)
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    draws = _as_rng(rng).random(count)
    return support[np.searchsorted(cdf, draws, side="right")].astype(np.int64)


def power_law_mean(exponent: float, x_min: int, x_max: int) -> float:
    support, probs = _power_law_weights(exponent, x_min, x_max)
    return float((support * probs).sum())


def degree_lower_bound(avg_degree: float, k_max: int, exponent: float) -> int:
    """Smallest degree k_min whose truncated power-law mean best matches avg_degree.

    The mean grows with k_min, so an integer bisection brackets the target and
    the closer of the two bracketing values wins.
    """
    lo, hi = 1, k_max
    if power_law_mean(exponent, lo, k_max) >= avg_degree:
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if power_law_mean(exponent, mid, k_max) < avg_degree:
            lo = mid
        else:
            hi = mid
    below = abs(power_law_mean(exponent, lo, k_max) - avg_degree)
    above = abs(power_law_mean(exponent, hi, k_max) - avg_degree)
    return lo if below <= above else hi


def _sample_degrees(params: LfrParams, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
    k_min = degree_lower_bound(params.avg_degree, params.k_max, params.alpha)
    degrees = sample_power_law(params.alpha, k_min, params.k_max, params.n, rng)
    if degrees.sum() % 2 == 1:
        bumpable = np.flatnonzero(degrees < params.k_max)
        node = bumpable[rng.integers(bumpable.size)] if bumpable.size else int(np.argmax(degrees))
        degrees[node] += 1 if degrees[node] < params.k_max else -1
    return degrees, k_min


def _internal_degrees(degrees: np.ndarray, mu: float, cap: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # stochastic rounding keeps the expected external share at mu
    target = (1.0 - mu) * degrees
    base = np.floor(target)
    internal = base + (rng.random(degrees.size) < (target - base))
    return np.minimum(internal.astype(np.int64), cap)


def _hosts_everyone(need: np.ndarray, sizes: np.ndarray) -> bool:
    """True when, for every internal-degree level t, communities larger than t can seat all nodes needing >= t."""
    levels = np.unique(need)
    demand = np.array([np.count_nonzero(need >= t) for t in levels])
    supply = np.array([sizes[sizes > t].sum() for t in levels])
    return bool(np.all(demand <= supply))


def _sample_sizes(params: LfrParams, need: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    s_min, s_max = params.s_min, params.community_max
    for _ in range(MAX_SIZE_ATTEMPTS):
        sizes: List[int] = []
        total = 0
        while total < params.n:
            size = int(sample_power_law(params.beta, s_min, s_max, 1, rng)[0])
            if total + size <= params.n:
                sizes.append(size)
                total += size
                continue
            remainder = params.n - total
            if remainder >= s_min:
                sizes.append(remainder)
                total += remainder
                continue
            # spread the remainder over communities that still have headroom
            headroom = [i for i, s in enumerate(sizes) if s < s_max]
            while remainder and headroom:
                pick = headroom[int(rng.integers(len(headroom)))]
                sizes[pick] += 1
                remainder -= 1
                total += 1
                if sizes[pick] >= s_max:
                    headroom.remove(pick)
            if remainder:
                break
        if total != params.n or len(sizes) < 2:
            continue
        candidate = np.asarray(sizes, dtype=np.int64)
        if _hosts_everyone(need, candidate):
            return candidate
    raise InfeasibleParams(
        f"no community-size sequence in [{s_min}, {s_max}] covers N={params.n} "
        f"and seats internal degrees up to {int(need.max())}"
    )


def _assign_communities(
    need: np.ndarray, sizes: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Place nodes so that every node's internal degree bound stays below its community size."""
    n = need.size
    k = sizes.size
    labels = np.full(n, -1, dtype=np.int64)
    members: List[List[int]] = [[] for _ in range(k)]
    queue = list(np.argsort(-need, kind="stable"))
    budget = MAX_ASSIGN_ROUNDS * n
    while queue:
        budget -= 1
        if budget < 0:
            raise InfeasibleParams("community assignment did not converge")
        node = int(queue.pop(0))
        eligible = np.flatnonzero(sizes > need[node])
        if eligible.size == 0:
            raise InfeasibleParams(f"no community can host internal degree {need[node]}")
        open_slots = [c for c in eligible if len(members[c]) < sizes[c]]
        if open_slots:
            community = int(open_slots[int(rng.integers(len(open_slots)))])
        else:
            # LFR homeless step: evict a random member and retry it later
            community = int(eligible[int(rng.integers(eligible.size))])
            evicted = members[community].pop(int(rng.integers(len(members[community]))))
            labels[evicted] = -1
            queue.append(evicted)
        members[community].append(node)
        labels[node] = community
    return labels


def _fix_parity(internal: np.ndarray, degrees: np.ndarray, labels: np.ndarray, sizes: np.ndarray,
                rng: np.random.Generator) -> None:
    for community in range(sizes.size):
        nodes = np.flatnonzero(labels == community)
        if internal[nodes].sum() % 2 == 0:
            continue
        grow = nodes[(internal[nodes] < degrees[nodes]) & (internal[nodes] < sizes[community] - 1)]
        if grow.size:
            internal[grow[rng.integers(grow.size)]] += 1
            continue
        shrink = nodes[internal[nodes] > 0]
        internal[shrink[rng.integers(shrink.size)]] -= 1


def _match_stubs(stubs: np.ndarray, rng: np.random.Generator) -> List[List[int]]:
    shuffled = rng.permutation(stubs)
    return [[int(shuffled[i]), int(shuffled[i + 1])] for i in range(0, shuffled.size - 1, 2)]


class _Rewirer:
    """Double-edge swaps that remove self-loops, multi-edges and misplaced edges.

    A swap is kept only when both new edges are valid, so repairs never turn a
    good edge bad and the list of bad positions can be pruned lazily.
    """

    def __init__(self, labels: np.ndarray, rng: np.random.Generator) -> None:
        self.labels = labels
        self.rng = rng
        self.count: Dict[Edge, int] = {}

    def add(self, u: int, v: int) -> None:
        key = canonical_edge(u, v)
        self.count[key] = self.count.get(key, 0) + 1

    def remove(self, u: int, v: int) -> None:
        key = canonical_edge(u, v)
        self.count[key] -= 1
        if self.count[key] == 0:
            del self.count[key]

    def _placed(self, u: int, v: int, internal: bool) -> bool:
        return bool(self.labels[u] == self.labels[v]) == internal

    def is_bad(self, edge: List[int], internal: bool) -> bool:
        u, v = edge
        if u == v or self.count.get(canonical_edge(u, v), 0) > 1:
            return True
        return not self._placed(u, v, internal)

    def _fits(self, u: int, v: int, internal: bool) -> bool:
        return u != v and canonical_edge(u, v) not in self.count and self._placed(u, v, internal)

    def _try_swap(self, pool: List[List[int]], i: int, j: int, internal: bool) -> bool:
        a, b = pool[i]
        c, d = pool[j]
        if self.rng.random() < 0.5:
            c, d = d, c
        if canonical_edge(a, d) == canonical_edge(c, b):
            return False
        if not (self._fits(a, d, internal) and self._fits(c, b, internal)):
            return False
        self.remove(a, b)
        self.remove(c, d)
        self.add(a, d)
        self.add(c, b)
        pool[i], pool[j] = [a, d], [c, b]
        return True

    def run(self, pool: List[List[int]], internal: bool, budget: int) -> int:
        """Swap until no bad edge is left or ``budget`` attempts are spent."""
        for edge in pool:
            self.add(*edge)
        bad = [i for i, edge in enumerate(pool) if self.is_bad(edge, internal)]
        spent = 0
        while bad and spent < budget and len(pool) > 1:
            slot = int(self.rng.integers(len(bad)))
            i = bad[slot]
            if self.is_bad(pool[i], internal):
                j = int(self.rng.integers(len(pool)))
                spent += 1
                if i == j or not self._try_swap(pool, i, j, internal):
                    continue
            bad[slot] = bad[-1]
            bad.pop()
        if bad:
            logger.debug("repair budget %s spent with up to %s bad edges left", budget, len(bad))
        return spent


def _drop_at(pool: List[Edge], index: int) -> None:
    last = pool.pop()
    if index < len(pool):
        pool[index] = last


def _merge_external(outer: List[Edge], inner: List[Edge], present: Set[Edge], labels: np.ndarray,
                    rng: np.random.Generator) -> bool:
    """(a, b), (c, d) external with a, c in one community -> (a, c) internal plus (b, d)."""
    i, j = (int(x) for x in rng.integers(len(outer), size=2))
    if i == j:
        return False
    first, second = outer[i], outer[j]
    for a, b in (first, first[::-1]):
        for c, d in (second, second[::-1]):
            if labels[a] != labels[c] or a == c or b == d:
                continue
            joined, rest = canonical_edge(a, c), canonical_edge(b, d)
            if joined in present or rest in present:
                continue
            for index in sorted((i, j), reverse=True):
                _drop_at(outer, index)
            present.difference_update((first, second))
            present.update((joined, rest))
            inner.append(joined)
            (inner if labels[b] == labels[d] else outer).append(rest)
            return True
    return False


def _split_internal(inner: List[Edge], outer: List[Edge], present: Set[Edge], labels: np.ndarray,
                    rng: np.random.Generator) -> bool:
    """(a, b), (c, d) internal to two different communities -> (a, c), (b, d) external."""
    i, j = (int(x) for x in rng.integers(len(inner), size=2))
    first, second = inner[i], inner[j]
    if i == j or labels[first[0]] == labels[second[0]]:
        return False
    a, b = first
    for c, d in (second, second[::-1]):
        left, right = canonical_edge(a, c), canonical_edge(b, d)
        if left in present or right in present:
            continue
        for index in sorted((i, j), reverse=True):
            _drop_at(inner, index)
        present.difference_update((first, second))
        present.update((left, right))
        outer.extend((left, right))
        return True
    return False


def _balance_mixing(edges: Set[Edge], labels: np.ndarray, mu: float, budget: int,
                    rng: np.random.Generator) -> Tuple[Set[Edge], int]:
    """Degree-preserving swaps that move the cross-community edge share toward ``mu``."""
    present = set(edges)
    ordered = sorted(present)
    inner = [e for e in ordered if labels[e[0]] == labels[e[1]]]
    outer = [e for e in ordered if labels[e[0]] != labels[e[1]]]
    goal = mu * len(present)
    spent = 0
    while spent < budget:
        gap = len(outer) - goal
        # one swap moves the external count by 1 or 2
        if abs(gap) <= 1.0:
            break
        if (gap > 0 and len(outer) < 2) or (gap < 0 and len(inner) < 2):
            break
        spent += 1
        if gap > 0:
            _merge_external(outer, inner, present, labels, rng)
        else:
            _split_internal(inner, outer, present, labels, rng)
    return present, spent


def empirical_mixing(g: Graph, p: Partition) -> float:
    """교차 커뮤니티 간선 끝점 비율 (2m 분의 외부 끝점 수)."""
    if p.n != g.n:
        raise SizeMismatch(f"partition covers {p.n} nodes, graph has {g.n}")
    if g.m == 0:
        raise EmptyGraph("mixing is undefined on a graph without edges")
    arr = g.edge_array
    cross = int(np.count_nonzero(p.labels[arr[:, 0]] != p.labels[arr[:, 1]]))
    return (2.0 * cross) / (2.0 * g.m)


def generate_lfr(params: LfrParams, seed: int = 0) -> LfrBenchmark:
    """LFR 벤치마크 그래프와 정답 분할을 생성한다.

    Each construction stage draws from its own sub-stream of ``seed`` so
    feature regeneration never disturbs topology.
    """
    params.validate()
    degree_rng = stream_rng(seed, DEGREE_STREAM)
    size_rng = stream_rng(seed, SIZE_STREAM)
    assign_rng = stream_rng(seed, ASSIGN_STREAM)
    wiring_rng = stream_rng(seed, WIRING_STREAM)

    degrees, k_min = _sample_degrees(params, degree_rng)
    if params.s_min <= k_min:
        logger.warning("s_min=%s does not exceed the degree floor k_min=%s", params.s_min, k_min)
    # a member's internal degree must stay below the largest community it could join
    cap = np.full(degrees.size, params.community_max - 1, dtype=np.int64)
    internal = _internal_degrees(degrees, params.mu, cap, degree_rng)
    # feasibility uses the rounded-up internal degree, an upper bound on the sampled one
    need = np.minimum(np.ceil((1.0 - params.mu) * degrees).astype(np.int64), cap)
    sizes = _sample_sizes(params, need, size_rng)
    labels = _assign_communities(need, sizes, assign_rng)
    _fix_parity(internal, degrees, labels, sizes, assign_rng)
    external = degrees - internal

    rewirer = _Rewirer(labels, wiring_rng)
    m_expected = int(degrees.sum()) // 2
    budget = params.max_rewire_iters if params.max_rewire_iters is not None else 50 * m_expected
    edges: List[List[int]] = []
    for community in range(sizes.size):
        nodes = np.flatnonzero(labels == community)
        pool = _match_stubs(np.repeat(nodes, internal[nodes]), wiring_rng)
        budget -= rewirer.run(pool, internal=True, budget=min(budget, REPAIR_TRIES_PER_EDGE * len(pool)))
        edges.extend(pool)
    ext_pool = _match_stubs(np.repeat(np.arange(params.n), external), wiring_rng)
    budget -= rewirer.run(ext_pool, internal=False, budget=min(budget, REPAIR_TRIES_PER_EDGE * len(ext_pool)))
    edges.extend(ext_pool)

    clean = {canonical_edge(u, v) for u, v in edges if u != v}
    dropped = len(edges) - len(clean)
    if dropped:
        logger.debug("dropped %s self-loops/multi-edges left after repair", dropped)
    balanced, spent = _balance_mixing(clean, labels, params.mu, budget, wiring_rng)
    logger.debug("mixing balance used %s of %s remaining swap attempts", spent, budget)
    graph = _graph_from_canonical(params.n, list(balanced))
    partition = Partition(labels)

    if graph.degree.min() < 1:
        raise RewireBudgetExceeded("repair left isolated nodes; raise max_rewire_iters")
    mixing = empirical_mixing(graph, partition)
    if abs(mixing - params.mu) > params.mixing_tolerance:
        raise RewireBudgetExceeded(
            f"empirical mixing {mixing:.4f} misses target {params.mu} by more than {params.mixing_tolerance}"
        )
    logger.info(
        "LFR graph n=%s m=%s communities=%s mixing=%.4f (target %.3f)",
        graph.n, graph.m, partition.k, mixing, params.mu,
    )
    return LfrBenchmark(graph=graph, partition=partition, mixing=mixing, degree_floor=k_min)


def generate_features(p: Partition, fp: FeatureGenParams, rng: RngLike = None) -> NodeFeatures:
    """커뮤니티별 중심 μ_i ~ N(0, σ_c² I) 를 뽑고 x_j ~ N(μ_{c_j}, σ² I) 로 특징을 만든다."""
    fp.validate()
    generator = _as_rng(rng) if rng is not None else stream_rng(fp.seed, FEATURE_STREAM)
    centroids = generator.normal(0.0, fp.sigma_c, size=(p.k, fp.d))
    noise = generator.normal(0.0, fp.sigma, size=(p.n, fp.d))
    return NodeFeatures(centroids[p.labels] + noise)


def save_benchmark(prefix: Union[str, Path], graph: Graph, partition: Partition,
                   features: Optional[NodeFeatures] = None) -> Dict[str, Path]:
    base = Path(prefix)
    base.parent.mkdir(parents=True, exist_ok=True)
    written = {
        "graph": base.with_name(base.name + ".edges"),
        "partition": base.with_name(base.name + ".partition"),
    }
    save_edge_list(graph, written["graph"])
    save_partition(partition, written["partition"])
    if features is not None:
        written["features"] = base.with_name(base.name + ".features.csv")
        save_features(features, written["features"])
    return written


__all__ = (
    "FeatureGenParams",
    "LfrBenchmark",
    "LfrParams",
    "degree_lower_bound",
    "empirical_mixing",
    "generate_features",
    "generate_lfr",
    "sample_power_law",
    "save_benchmark",
    "stream_rng",
)
