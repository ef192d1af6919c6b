"""그래프/분할/노드 특징 표현과 파일 입출력, 구조 기본 연산."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components

from service.errors import (
    DimensionMismatch,
    DuplicateEdge,
    EmptyGraph,
    GraphError,
    NodeOutOfRange,
    ParseError,
    SelfLoop,
    SizeMismatch,
)

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]
PathLike = Union[str, Path]


def canonical_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph on dense ids 0..n-1 with canonically sorted edges."""

    n: int
    edges: Tuple[Edge, ...]
    degree: np.ndarray

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_array(self) -> np.ndarray:
        arr = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        arr.setflags(write=False)
        return arr

    @cached_property
    def edge_set(self) -> frozenset:
        return frozenset(self.edges)

    @cached_property
    def neighbors(self) -> Tuple[np.ndarray, ...]:
        arr = self.edge_array
        src = np.concatenate([arr[:, 0], arr[:, 1]])
        dst = np.concatenate([arr[:, 1], arr[:, 0]])
        order = np.lexsort((dst, src))
        splits = np.cumsum(self.degree)[:-1]
        return tuple(np.split(dst[order], splits))

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = self.sparse_adjacency.toarray()
        a.setflags(write=False)
        return a

    @cached_property
    def sparse_adjacency(self) -> csr_matrix:
        arr = self.edge_array
        rows = np.concatenate([arr[:, 0], arr[:, 1]])
        cols = np.concatenate([arr[:, 1], arr[:, 0]])
        data = np.ones(rows.shape[0], dtype=np.float64)
        return coo_matrix((data, (rows, cols)), shape=(self.n, self.n)).tocsr()

    def has_edge(self, u: int, v: int) -> bool:
        return canonical_edge(u, v) in self.edge_set

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.n, self.edges))


@dataclass(frozen=True, eq=False)
class Partition:
    """Hard, non-overlapping community assignment.

    Labels are canonicalized on construction: community ids are renumbered
    0..k-1 in order of first appearance along the node order.
    """

    labels: np.ndarray

    def __post_init__(self) -> None:
        raw = np.asarray(self.labels)
        if raw.ndim != 1 or raw.shape[0] == 0:
            raise DimensionMismatch("partition labels must be a non-empty vector")
        object.__setattr__(self, "labels", canonical_labels(raw))

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    @cached_property
    def k(self) -> int:
        return int(self.labels.max()) + 1

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def members(self, community: int) -> np.ndarray:
        if not 0 <= community < self.k:
            raise NodeOutOfRange(f"community {community} not in 0..{self.k - 1}")
        return np.flatnonzero(self.labels == community)

    def communities(self) -> List[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        return np.split(order, np.cumsum(self.sizes)[:-1])

    def membership_matrix(self) -> np.ndarray:
        c = np.zeros((self.n, self.k), dtype=np.float64)
        c[np.arange(self.n), self.labels] = 1.0
        return c

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    def __hash__(self) -> int:
        return hash(self.labels.tobytes())


@dataclass(frozen=True, eq=False)
class NodeFeatures:
    matrix: np.ndarray

    def __post_init__(self) -> None:
        mat = np.array(self.matrix, dtype=np.float64, copy=True)
        if mat.ndim != 2:
            raise DimensionMismatch(f"feature matrix must be 2-D, got shape {mat.shape}")
        if not np.all(np.isfinite(mat)):
            raise GraphError("feature matrix contains non-finite entries")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def n(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def d(self) -> int:
        return int(self.matrix.shape[1])

    def with_rows(self, updates: Dict[int, np.ndarray]) -> "NodeFeatures":
        mat = np.array(self.matrix, copy=True)
        for node, row in updates.items():
            mat[node] = row
        return NodeFeatures(mat)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NodeFeatures):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix)

    def __hash__(self) -> int:
        return hash(self.matrix.tobytes())


def canonical_labels(raw: np.ndarray) -> np.ndarray:
    """Renumber arbitrary labels to 0..k-1 by first appearance."""
    _, first_index, inverse = np.unique(raw, return_index=True, return_inverse=True)
    rank = np.empty(first_index.shape[0], dtype=np.int64)
    rank[np.argsort(first_index)] = np.arange(first_index.shape[0])
    labels = rank[inverse.reshape(-1)]
    labels.setflags(write=False)
    return labels


def _graph_from_canonical(n: int, edges: Sequence[Edge]) -> Graph:
    ordered = tuple(sorted(edges))
    degree = np.zeros(n, dtype=np.int64)
    if ordered:
        arr = np.asarray(ordered, dtype=np.int64)
        np.add.at(degree, arr[:, 0], 1)
        np.add.at(degree, arr[:, 1], 1)
    degree.setflags(write=False)
    return Graph(n=n, edges=ordered, degree=degree)


def build_graph(n: int, edge_list: Iterable[Tuple[int, int]]) -> Graph:
    """엄격 모드로 단순 무방향 그래프를 생성한다. 중복/자기 루프/범위 오류는 예외."""
    if n < 1:
        raise EmptyGraph(f"node count must be positive, got {n}")
    seen: set = set()
    for raw_u, raw_v in edge_list:
        u, v = int(raw_u), int(raw_v)
        if not (0 <= u < n and 0 <= v < n):
            raise NodeOutOfRange(f"edge ({u}, {v}) references a node outside 0..{n - 1}")
        if u == v:
            raise SelfLoop(f"self-loop on node {u}")
        edge = canonical_edge(u, v)
        if edge in seen:
            raise DuplicateEdge(f"edge {edge} appears more than once")
        seen.add(edge)
    return _graph_from_canonical(n, list(seen))


def graph_from_pairs(n: int, pairs: Iterable[Tuple[int, int]]) -> Tuple[Graph, int, int]:
    """Lenient construction: symmetrize, collapse duplicates, drop self-loops.

    Returns the graph with the number of collapsed duplicates and dropped loops.
    """
    if n < 1:
        raise EmptyGraph(f"node count must be positive, got {n}")
    seen: set = set()
    duplicates = 0
    loops = 0
    for u, v in pairs:
        if not (0 <= u < n and 0 <= v < n):
            raise NodeOutOfRange(f"edge ({u}, {v}) references a node outside 0..{n - 1}")
        if u == v:
            loops += 1
            continue
        edge = canonical_edge(u, v)
        if edge in seen:
            duplicates += 1
            continue
        seen.add(edge)
    return _graph_from_canonical(n, list(seen)), duplicates, loops


def _check_nodes(g: Graph, nodes: Iterable[int]) -> np.ndarray:
    arr = np.unique(np.fromiter((int(u) for u in nodes), dtype=np.int64))
    if arr.size and (arr[0] < 0 or arr[-1] >= g.n):
        bad = arr[(arr < 0) | (arr >= g.n)][0]
        raise NodeOutOfRange(f"node {bad} not in 0..{g.n - 1}")
    return arr


def community_mask(g: Graph, community: Iterable[int]) -> np.ndarray:
    mask = np.zeros(g.n, dtype=bool)
    mask[_check_nodes(g, community)] = True
    return mask


def intra_edges(g: Graph, community: Iterable[int]) -> List[Edge]:
    """커뮤니티 내부(양 끝점 모두 포함) 간선 목록을 정렬된 순서로 반환한다."""
    mask = community_mask(g, community)
    arr = g.edge_array
    keep = mask[arr[:, 0]] & mask[arr[:, 1]]
    return [g.edges[i] for i in np.flatnonzero(keep)]


def boundary_edges(g: Graph, community: Iterable[int]) -> List[Edge]:
    """Edges with exactly one endpoint in the community."""
    mask = community_mask(g, community)
    arr = g.edge_array
    keep = mask[arr[:, 0]] != mask[arr[:, 1]]
    return [g.edges[i] for i in np.flatnonzero(keep)]


def subgraph(g: Graph, nodes: Iterable[int]) -> Tuple[Graph, np.ndarray]:
    """Induced subgraph; returns it with the new-id → original-id map."""
    keep = _check_nodes(g, nodes)
    if keep.size == 0:
        raise EmptyGraph("subgraph needs at least one node")
    remap = np.full(g.n, -1, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    arr = g.edge_array
    mapped = remap[arr] if arr.size else arr
    inside = (mapped >= 0).all(axis=1) if arr.size else np.zeros(0, dtype=bool)
    edges = [(int(u), int(v)) for u, v in mapped[inside]]
    return _graph_from_canonical(int(keep.size), edges), keep


def largest_connected_component(g: Graph) -> Tuple[Graph, np.ndarray]:
    """최대 연결 요소를 추출한다. 크기가 같으면 가장 작은 원래 노드 id 를 가진 요소를 고른다."""
    _, comp = connected_components(g.sparse_adjacency, directed=False)
    sizes = np.bincount(comp)
    _, first_node = np.unique(comp, return_index=True)
    best = min(range(sizes.size), key=lambda c: (-sizes[c], first_node[c]))
    nodes = np.flatnonzero(comp == best)
    if nodes.size < g.n:
        logger.info("largest component keeps %s of %s nodes", nodes.size, g.n)
    return subgraph(g, nodes)


def quotient_graph(g: Graph, p: Partition) -> Graph:
    """커뮤니티를 하나의 노드로 축약한 비가중 몫 그래프."""
    if p.n != g.n:
        raise SizeMismatch(f"partition covers {p.n} nodes, graph has {g.n}")
    arr = g.edge_array
    if arr.size == 0:
        return _graph_from_canonical(p.k, [])
    lu = p.labels[arr[:, 0]]
    lv = p.labels[arr[:, 1]]
    cross = lu != lv
    pairs = np.stack([np.minimum(lu[cross], lv[cross]), np.maximum(lu[cross], lv[cross])], axis=1)
    unique_pairs = np.unique(pairs, axis=0) if pairs.size else pairs
    return _graph_from_canonical(p.k, [(int(a), int(b)) for a, b in unique_pairs])


# ---------------------------------------------------------------------------
# file IO
# ---------------------------------------------------------------------------


def save_edge_list(g: Graph, path: PathLike) -> None:
    lines = [f"# n={g.n}"]
    lines.extend(f"{u}\t{v}" for u, v in g.edges)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _iter_data_lines(path: PathLike):
    with open(path, "r", encoding="utf-8") as handle:
        for number, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            yield number, line


def load_edge_list(path: PathLike) -> Graph:
    """정수 id 간선 목록 파일을 읽는다. 역방향/중복 간선은 합치고 경고를 남긴다."""
    declared_n: Optional[int] = None
    pairs: List[Tuple[int, int]] = []
    for number, line in _iter_data_lines(path):
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("n="):
                try:
                    declared_n = int(body[2:])
                except ValueError as exc:
                    raise ParseError(f"bad node-count header {line!r}", number) from exc
            continue
        fields = line.split()
        if len(fields) != 2:
            raise ParseError(f"expected 'u<TAB>v', got {line!r}", number)
        try:
            pairs.append((int(fields[0]), int(fields[1])))
        except ValueError as exc:
            raise ParseError(f"non-integer node id in {line!r}", number) from exc

    if declared_n is None:
        if not pairs:
            raise ParseError("edge list is empty and has no '# n=' header")
        declared_n = max(max(u, v) for u, v in pairs) + 1
    graph, duplicates, loops = graph_from_pairs(declared_n, pairs)
    if duplicates or loops:
        logger.warning("%s: collapsed %s duplicate edges, dropped %s self-loops", path, duplicates, loops)
    return graph


def load_labeled_edge_list(path: PathLike) -> Tuple[Graph, Tuple[str, ...]]:
    """Edge list with arbitrary string node ids.

    Ids are mapped to 0..n-1 in lexicographic order; the returned tuple is
    the new-id → original-id map.
    """
    raw_pairs: List[Tuple[str, str]] = []
    for number, line in _iter_data_lines(path):
        if line.startswith("#"):
            continue
        fields = line.split("\t") if "\t" in line else line.split()
        fields = [field.strip() for field in fields if field.strip()]
        if len(fields) < 2:
            raise ParseError(f"expected two node ids, got {line!r}", number)
        raw_pairs.append((fields[0], fields[1]))
    if not raw_pairs:
        raise ParseError("edge list is empty")

    ids = tuple(sorted({token for pair in raw_pairs for token in pair}))
    lookup = {token: index for index, token in enumerate(ids)}
    graph, duplicates, loops = graph_from_pairs(len(ids), ((lookup[a], lookup[b]) for a, b in raw_pairs))
    if duplicates or loops:
        logger.warning("%s: collapsed %s duplicate edges, dropped %s self-loops", path, duplicates, loops)
    return graph, ids


def save_id_map(ids: Sequence[str], path: PathLike) -> None:
    lines = [f"{index}\t{token}" for index, token in enumerate(ids)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_id_map(path: PathLike) -> Tuple[str, ...]:
    ids: List[str] = []
    for number, line in _iter_data_lines(path):
        index, _, token = line.partition("\t")
        if not token or index != str(len(ids)):
            raise ParseError(f"expected '{len(ids)}<TAB>id', got {line!r}", number)
        ids.append(token)
    return tuple(ids)


def save_features(x: NodeFeatures, path: PathLike) -> None:
    np.savetxt(path, x.matrix, delimiter=",", fmt="%.17g")


def load_features(path: PathLike, n: Optional[int] = None) -> NodeFeatures:
    rows: List[List[float]] = []
    width: Optional[int] = None
    for number, line in _iter_data_lines(path):
        try:
            row = [float(token) for token in line.split(",")]
        except ValueError as exc:
            raise ParseError(f"non-numeric feature value in {line!r}", number) from exc
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(f"expected {width} values, got {len(row)}", number)
        rows.append(row)
    if not rows:
        raise ParseError("feature file is empty")
    if n is not None and len(rows) != n:
        raise DimensionMismatch(f"feature file has {len(rows)} rows, graph has {n} nodes")
    return NodeFeatures(np.asarray(rows, dtype=np.float64))


def save_partition(p: Partition, path: PathLike) -> None:
    lines = [f"{node}\t{label}" for node, label in enumerate(p.labels)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_partition(path: PathLike, n: Optional[int] = None) -> Partition:
    assigned: Dict[int, str] = {}
    for number, line in _iter_data_lines(path):
        fields = line.split()
        if len(fields) != 2:
            raise ParseError(f"expected 'node<TAB>label', got {line!r}", number)
        try:
            node = int(fields[0])
        except ValueError as exc:
            raise ParseError(f"non-integer node id in {line!r}", number) from exc
        if node in assigned:
            raise ParseError(f"node {node} assigned twice", number)
        assigned[node] = fields[1]
    if not assigned:
        raise ParseError("partition file is empty")
    size = n if n is not None else max(assigned) + 1
    if set(assigned) != set(range(size)):
        raise DimensionMismatch(f"partition lists {len(assigned)} nodes, expected ids 0..{size - 1}")
    raw = [assigned[node] for node in range(size)]
    if all(label.lstrip("-").isdigit() for label in raw):
        return Partition(np.asarray([int(label) for label in raw], dtype=np.int64))
    return Partition(np.asarray(raw))
