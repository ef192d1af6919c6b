"""설정 기반 스윕 실행기: 생성 → 섭동 → 군집 → 평가 → 레코드 저장, 실제 네트워크 수집."""

from __future__ import annotations

import asyncio
import hashlib
import json
import logging
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Set, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from service.dmon_service import DmonHyper, train
from service.errors import ComconcealError, ConfigError
from service.graph_service import (
    Graph,
    NodeFeatures,
    Partition,
    largest_connected_component,
    load_edge_list,
    load_features,
    load_labeled_edge_list,
    save_edge_list,
    save_features,
)
from service.lfr_service import (
    FeatureGenParams,
    LfrBenchmark,
    LfrParams,
    empirical_mixing,
    generate_features,
    generate_lfr,
)
from service.louvain_service import consensus_louvain
from service.metric_service import (
    EcsParams,
    GraphCentrality,
    community_descriptors,
    element_centric_similarity,
    m1,
    m2,
    modularity,
)
from service.perturb_service import CentroidIndex, PerturbationResult, PerturbSpec, community_centroids, perturb
from service.stats_service import RECORD_COLUMNS, ExperimentRecord
from setting import APP_VERSION, OUTPUT_ROOT
from setting.sweep_config import RealNetworkSpec, SweepConfig

logger = logging.getLogger(__name__)

RECORDS_FILE = "records.csv"
MANIFEST_FILE = "manifest.json"
FAILURES_FILE = "failures.json"
ARTIFACT_DIR = "artifacts"
FLOAT_FORMAT = "%.12g"
LFR_DATASET = "lfr"
# sigma_c value recorded for cells that keep the network's own features
ORIGINAL_FEATURES = 0.0
UNIT_COLUMNS = ["dataset", "mu", "s_min", "sigma_c", "realization"]
CELL_COLUMNS = UNIT_COLUMNS + ["target", "beta_b", "p", "method"]


def derive_seed(master_seed: int, *parts: Any) -> int:
    """Seed for one component of the sweep, hashed from the master seed and a canonical key."""
    payload = json.dumps([int(master_seed), *parts], separators=(",", ":"), default=str)
    return int.from_bytes(hashlib.sha256(payload.encode("utf-8")).digest()[:8], "big") >> 1


@dataclass(frozen=True)
class WorkUnit:
    """One generated (or ingested) graph with one feature realization."""

    index: int
    dataset: str
    mu: float
    s_min: int
    sigma_c: float
    realization: int

    @property
    def key(self) -> Tuple[str, float, int, float, int]:
        return (self.dataset, self.mu, self.s_min, self.sigma_c, self.realization)

    @property
    def topology_key(self) -> Tuple[float, int, int]:
        return (self.mu, self.s_min, self.realization)


@dataclass(frozen=True)
class RealNetwork:
    graph: Graph
    partition: Partition
    features: Optional[NodeFeatures]
    ids: Optional[Tuple[str, ...]] = None


@dataclass
class UnitResult:
    unit: WorkUnit
    records: List[ExperimentRecord] = field(default_factory=list)
    failures: List[Dict[str, Any]] = field(default_factory=list)


@dataclass(frozen=True)
class SweepOutcome:
    records_path: Path
    new_records: int
    skipped_units: int
    failures: List[Dict[str, Any]]


class TopologyCache:
    """LFR graphs shared by the sigma_c levels of one (mu, s_min, realization).

    Each key is built once under its own lock and dropped after its last
    announced use, so only graphs of units in flight stay in memory.
    """

    def __init__(self, uses: Optional[Dict[Tuple, int]] = None) -> None:
        self._uses: Dict[Tuple, int] = dict(uses or {})
        self._entries: Dict[Tuple, Union[LfrBenchmark, Exception]] = {}
        self._locks: Dict[Tuple, threading.Lock] = {}
        self._guard = threading.Lock()
        self.builds = 0

    def get(self, key: Tuple, params: LfrParams, seed: int) -> LfrBenchmark:
        with self._guard:
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            if key not in self._entries:
                self.builds += 1
                try:
                    self._entries[key] = generate_lfr(params, seed)
                except ComconcealError as exc:
                    self._entries[key] = exc
            entry = self._entries[key]
        self._release(key)
        if isinstance(entry, Exception):
            raise entry
        return entry

    def _release(self, key: Tuple) -> None:
        with self._guard:
            if key not in self._uses:
                return
            self._uses[key] -= 1
            if self._uses[key] <= 0:
                del self._uses[key]
                self._entries.pop(key, None)
                self._locks.pop(key, None)


# ---------------------------------------------------------------------------
# real-network ingestion
# ---------------------------------------------------------------------------


def ingest_real_network(spec: RealNetworkSpec, seed: int = 0, sigma_c: Optional[float] = None) -> RealNetwork:
    """실제 네트워크를 읽고 (선택적으로 LCC 만 남긴 뒤) 합의 Louvain 라벨과 특징을 준비한다.

    Zero-degree nodes are kept when ``take_lcc`` is off. Feature rows of a
    loaded file follow the original node order and are cut down with the graph.
    """
    if spec.labeled_ids:
        graph, ids = load_labeled_edge_list(spec.edges)
    else:
        graph, ids = load_edge_list(spec.edges), None
    original_n = graph.n
    keep = np.arange(graph.n)
    if spec.take_lcc:
        graph, keep = largest_connected_component(graph)
        if ids is not None:
            ids = tuple(ids[i] for i in keep)
    rng = np.random.default_rng(derive_seed(seed, "consensus", spec.name))
    partition = consensus_louvain(graph, runs=spec.consensus_runs, tau=spec.tau, rng=rng)
    logger.info("ingested %s: n=%s m=%s consensus communities=%s", spec.name, graph.n, graph.m, partition.k)

    features: Optional[NodeFeatures] = None
    level = sigma_c if sigma_c is not None else spec.sigma_c
    if spec.features is not None and (spec.use_original_features or level is None):
        loaded = load_features(spec.features, n=original_n)
        features = NodeFeatures(loaded.matrix[keep])
    elif level is not None:
        fp = FeatureGenParams(d=spec.d, sigma_c=level, seed=derive_seed(seed, "features", spec.name, level))
        features = generate_features(partition, fp)
    return RealNetwork(graph=graph, partition=partition, features=features, ids=ids)


# ---------------------------------------------------------------------------
# sweep enumeration
# ---------------------------------------------------------------------------


def _real_sigma_levels(config: SweepConfig) -> List[float]:
    spec = config.real_network
    if spec.use_original_features or (spec.features is not None and spec.sigma_c is None):
        return [ORIGINAL_FEATURES]
    return [spec.sigma_c]


def enumerate_units(config: SweepConfig, real_mixing: Optional[float] = None) -> List[WorkUnit]:
    units: List[WorkUnit] = []
    if config.real_network is not None:
        mu = round(real_mixing, 6) if real_mixing is not None else 0.0
        for sigma_c in _real_sigma_levels(config):
            for r in range(config.realizations):
                units.append(WorkUnit(len(units), config.real_network.name, mu, 0, sigma_c, r))
        return units
    for mu in config.lfr.mu:
        for s_min in config.lfr.s_min:
            for sigma_c in config.features.sigma_c:
                for r in range(config.realizations):
                    units.append(WorkUnit(len(units), LFR_DATASET, mu, s_min, sigma_c, r))
    return units


def _targets(config: SweepConfig, k: int) -> List[int]:
    if config.targets is None:
        return list(range(k))
    return [t for t in config.targets if 0 <= t < k]


def _cells(config: SweepConfig, targets: List[int]) -> Iterator[Tuple[int, float, float, str]]:
    for target in targets:
        for beta_b in config.perturbation.beta_b:
            for p in config.perturbation.p:
                for method in config.perturbation.methods:
                    yield target, beta_b, p, method


def _hyper(config: SweepConfig, k: int, seed: int) -> DmonHyper:
    d = config.dmon
    return DmonHyper(
        k=k,
        hidden_dims=tuple(d.hidden_dims),
        learning_rate=d.learning_rate,
        epochs=d.epochs,
        dropout_rate=d.dropout_rate,
        init_scale=d.init_scale,
        seed=seed,
        dropout_enabled=d.dropout_rate > 0,
        collapse_weight=d.collapse_weight,
    )


# ---------------------------------------------------------------------------
# one work unit
# ---------------------------------------------------------------------------


def _materialize(
    unit: WorkUnit,
    config: SweepConfig,
    real: Optional[RealNetwork],
    topologies: Optional[TopologyCache] = None,
) -> Tuple[Graph, Partition, NodeFeatures]:
    seed = config.master_seed
    if real is not None:
        if unit.sigma_c == ORIGINAL_FEATURES:
            if real.features is None:
                raise ConfigError(f"{unit.dataset} has no original features")
            return real.graph, real.partition, real.features
        fp = FeatureGenParams(
            d=config.real_network.d,
            sigma_c=unit.sigma_c,
            seed=derive_seed(seed, "features", unit.dataset, unit.sigma_c, unit.realization),
        )
        return real.graph, real.partition, generate_features(real.partition, fp)

    lfr = config.lfr
    params = LfrParams(
        n=lfr.n,
        avg_degree=lfr.avg_degree,
        k_max=lfr.k_max,
        alpha=lfr.alpha,
        beta=lfr.beta,
        s_min=unit.s_min,
        s_max=lfr.s_max,
        mu=unit.mu,
        mixing_tolerance=lfr.mixing_tolerance,
        max_rewire_iters=lfr.max_rewire_iters,
    )
    # topology does not depend on sigma_c, so every sigma_c level shares the graph
    graph_seed = derive_seed(seed, "graph", *unit.topology_key)
    if topologies is not None:
        bench = topologies.get(unit.topology_key, params, graph_seed)
    else:
        bench = generate_lfr(params, graph_seed)
    fp = FeatureGenParams(
        d=config.features.d,
        sigma_c=unit.sigma_c,
        sigma=config.features.sigma,
        seed=derive_seed(seed, "features", unit.mu, unit.s_min, unit.sigma_c, unit.realization),
    )
    return bench.graph, bench.partition, generate_features(bench.partition, fp)


def _content_hash(result: PerturbationResult) -> str:
    digest = hashlib.sha256()
    digest.update(result.graph.edge_array.tobytes())
    if result.features is not None:
        digest.update(result.features.matrix.tobytes())
    return digest.hexdigest()[:16]


def _save_artifact(out_dir: Path, result: PerturbationResult) -> Path:
    target = out_dir / ARTIFACT_DIR / _content_hash(result)
    target.mkdir(parents=True, exist_ok=True)
    save_edge_list(result.graph, target / "graph.edges")
    if result.features is not None:
        save_features(result.features, target / "features.csv")
    result.save_ledger(target / "ledger.json")
    return target


def _failure(where: Dict[str, Any], stage: str, exc: Exception) -> Dict[str, Any]:
    return {**where, "stage": stage, "error": f"{type(exc).__name__}: {exc}"}


def run_unit(
    unit: WorkUnit,
    config: SweepConfig,
    done: Optional[Set[Tuple]] = None,
    real: Optional[RealNetwork] = None,
    out_dir: Optional[Path] = None,
    topologies: Optional[TopologyCache] = None,
) -> UnitResult:
    """작업 단위 하나(그래프 1개 × 특징 1개)의 모든 셀을 실행한다. 셀 실패는 기록하고 계속한다."""
    done = done or set()
    outcome = UnitResult(unit)
    seed = config.master_seed
    base = {"dataset": unit.dataset, "mu": unit.mu, "s_min": unit.s_min, "sigma_c": unit.sigma_c,
            "realization": unit.realization}
    try:
        graph, truth, features = _materialize(unit, config, real, topologies)
        k = truth.k
        baseline = train(graph, features, _hyper(config, k, derive_seed(seed, "dmon", *unit.key))).partition
        q_before = modularity(graph, truth)
        index: CentroidIndex = community_centroids(features, truth)
        centrality = GraphCentrality.of(graph) if config.descriptors else None
    except ComconcealError as exc:
        logger.warning("unit %s failed: %s", unit.key, exc)
        outcome.failures.append(_failure(base, "unit", exc))
        return outcome
    except Exception as exc:
        logger.exception("unit %s failed unexpectedly", unit.key)
        outcome.failures.append(_failure(base, "unit", exc))
        return outcome

    ecs_params = EcsParams(config.ecs_alpha)
    descriptors: Dict[int, Dict[str, Any]] = {}
    for target, beta_b, p, method in _cells(config, _targets(config, k)):
        cell_key = (*unit.key, target, beta_b, p, method)
        if cell_key in done:
            continue
        cell = {**base, "target": target, "beta_b": beta_b, "p": p, "method": method}
        try:
            members = truth.members(target)
            if target not in descriptors:
                descriptors[target] = _descriptor_fields(graph, truth, features, target, centrality)
            cell_seed = derive_seed(seed, "perturb", *cell_key)
            spec = PerturbSpec(target=frozenset(members.tolist()), beta_b=beta_b, p=p, seed=cell_seed)
            result = perturb(method, graph, spec, x=features, p=truth, rng=np.random.default_rng(cell_seed),
                             index=index)
            # DMoN sees only the released graph: retrained from scratch, no warm start
            hyper = _hyper(config, k, derive_seed(seed, "dmon-after", *cell_key))
            detected = train(result.graph, result.features, hyper).partition
            if config.save_artifacts and out_dir is not None:
                _save_artifact(out_dir, result)
            outcome.records.append(
                ExperimentRecord(
                    dataset=unit.dataset,
                    mu=unit.mu,
                    s_min=unit.s_min,
                    sigma_c=unit.sigma_c,
                    beta_b=beta_b,
                    p=p,
                    method=method,
                    realization=unit.realization,
                    target=target,
                    seed=cell_seed,
                    k=k,
                    k_detected=detected.k,
                    m1=m1(members, detected),
                    m2=m2(members, detected, graph.n),
                    ecs=element_centric_similarity(truth, detected, ecs_params),
                    q_before=q_before,
                    q_after=modularity(result.graph, truth),
                    m1_before=m1(members, baseline),
                    m2_before=m2(members, baseline, graph.n),
                    b=result.budget.b,
                    b_del=result.budget.b_del,
                    b_add=result.budget.b_add,
                    n_deleted=len(result.deleted),
                    n_added=len(result.added),
                    exhausted_deletion=result.exhausted.deletion,
                    exhausted_addition=result.exhausted.addition,
                    **descriptors[target],
                )
            )
        except ComconcealError as exc:
            logger.warning("cell %s failed: %s", cell_key, exc)
            outcome.failures.append(_failure(cell, "cell", exc))
        except Exception as exc:
            logger.exception("cell %s failed unexpectedly", cell_key)
            outcome.failures.append(_failure(cell, "cell", exc))
    return outcome


_EMPTY_DESCRIPTORS = {
    "avg_centroid_sq_distance": None,
    "community_size": 0,
    "inter_intra_ratio": None,
    "mean_degree": None,
    "community_degree": None,
    "mean_betweenness": None,
    "community_betweenness": None,
    "mean_closeness": None,
    "community_closeness": None,
    "intra_edges": 0,
    "inter_edges": 0,
    "ratio_defined": False,
}


def _descriptor_fields(
    graph: Graph, truth: Partition, features: NodeFeatures, target: int, centrality: Optional[GraphCentrality]
) -> Dict[str, Any]:
    if centrality is None:
        return {**_EMPTY_DESCRIPTORS, "community_size": int(truth.sizes[target])}
    record = community_descriptors(graph, truth, features, target, centrality).as_dict()
    if not record["ratio_defined"]:
        record["inter_intra_ratio"] = None
    return record


# ---------------------------------------------------------------------------
# record file handling
# ---------------------------------------------------------------------------


def _write_rows(path: Path, rows: List[ExperimentRecord]) -> None:
    if not rows:
        return
    frame = pd.DataFrame([r.as_row() for r in rows], columns=list(RECORD_COLUMNS))
    frame.to_csv(path, mode="a", header=not path.exists(), index=False, float_format=FLOAT_FORMAT,
                 lineterminator="\n")


def _read_existing(path: Path) -> pd.DataFrame:
    if not path.exists() or path.stat().st_size == 0:
        return pd.DataFrame(columns=list(RECORD_COLUMNS))
    frame = pd.read_csv(path)
    if list(frame.columns) != list(RECORD_COLUMNS):
        raise ConfigError(f"{path} has a different column layout; use a fresh output directory")
    return frame


def _cell_key(row: Any) -> Tuple:
    return (row.dataset, float(row.mu), int(row.s_min), float(row.sigma_c), int(row.realization),
            int(row.target), float(row.beta_b), float(row.p), row.method)


def _unit_complete(unit: WorkUnit, existing: pd.DataFrame, config: SweepConfig) -> bool:
    rows = existing[
        (existing["dataset"] == unit.dataset)
        & (existing["mu"] == unit.mu)
        & (existing["s_min"] == unit.s_min)
        & (existing["sigma_c"] == unit.sigma_c)
        & (existing["realization"] == unit.realization)
    ]
    if rows.empty:
        return False
    return len(rows) >= expected_record_count(config, {unit.key: int(rows["k"].iloc[0])})


def _canonical_rewrite(path: Path, config: SweepConfig, units: List[WorkUnit]) -> None:
    """Rewrite the record file in enumeration order so resumed runs match uninterrupted ones."""
    frame = _read_existing(path)
    if frame.empty:
        return
    unit_rank = {u.key: u.index for u in units}
    beta_rank = {v: i for i, v in enumerate(config.perturbation.beta_b)}
    p_rank = {v: i for i, v in enumerate(config.perturbation.p)}
    method_rank = {v: i for i, v in enumerate(config.perturbation.methods)}
    order = [
        (
            unit_rank.get((r.dataset, float(r.mu), int(r.s_min), float(r.sigma_c), int(r.realization)), len(units)),
            int(r.target),
            beta_rank.get(float(r.beta_b), len(beta_rank)),
            p_rank.get(float(r.p), len(p_rank)),
            method_rank.get(r.method, len(method_rank)),
        )
        for r in frame.itertuples(index=False)
    ]
    frame = frame.iloc[sorted(range(len(order)), key=order.__getitem__)]
    frame = frame.drop_duplicates(subset=CELL_COLUMNS, keep="first")
    tmp = path.with_suffix(".tmp")
    frame.to_csv(tmp, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    tmp.replace(path)


def _manifest(config: SweepConfig) -> Dict[str, Any]:
    return {
        "version": APP_VERSION,
        "config": config.model_dump(mode="json", exclude={"threads", "output_dir"}),
    }


def _check_manifest(out_dir: Path, config: SweepConfig) -> None:
    path = out_dir / MANIFEST_FILE
    manifest = _manifest(config)
    if path.exists():
        previous = json.loads(path.read_text(encoding="utf-8"))
        if previous != manifest:
            raise ConfigError(f"{path} belongs to a different configuration or version")
        return
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# sweep driver
# ---------------------------------------------------------------------------


async def _run_units(
    units: List[WorkUnit],
    config: SweepConfig,
    done: Set[Tuple],
    real: Optional[RealNetwork],
    out_dir: Path,
    records_path: Path,
    topologies: Optional[TopologyCache] = None,
) -> Tuple[int, List[Dict[str, Any]]]:
    semaphore = asyncio.Semaphore(config.threads)
    pending: Dict[int, UnitResult] = {}
    order = [u.index for u in units]
    cursor = 0
    written = 0
    failures: List[Dict[str, Any]] = []

    async def _worker(unit: WorkUnit) -> UnitResult:
        async with semaphore:
            return await asyncio.to_thread(run_unit, unit, config, done, real, out_dir, topologies)

    tasks = [asyncio.create_task(_worker(u)) for u in units]
    with tqdm(total=len(units), desc=config.name, unit="unit", disable=not units) as bar:
        for next_done in asyncio.as_completed(tasks):
            result = await next_done
            pending[result.unit.index] = result
            bar.update(1)
            # single appender: flush in enumeration order only
            while cursor < len(order) and order[cursor] in pending:
                ready = pending.pop(order[cursor])
                _write_rows(records_path, ready.records)
                written += len(ready.records)
                failures.extend(ready.failures)
                cursor += 1
    return written, failures


def run_experiment(config: SweepConfig, output_dir: Optional[Path] = None) -> SweepOutcome:
    """스윕 전체를 실행한다. 이미 기록된 셀은 건너뛰므로 중단 후 재실행할 수 있다."""
    out_dir = Path(output_dir or config.output_dir or OUTPUT_ROOT / config.name)
    out_dir.mkdir(parents=True, exist_ok=True)
    _check_manifest(out_dir, config)

    real: Optional[RealNetwork] = None
    mixing: Optional[float] = None
    if config.real_network is not None:
        real = ingest_real_network(config.real_network, seed=config.master_seed)
        mixing = empirical_mixing(real.graph, real.partition)
    units = enumerate_units(config, mixing)

    records_path = out_dir / RECORDS_FILE
    existing = _read_existing(records_path)
    done = {_cell_key(r) for r in existing.itertuples(index=False)}
    todo = [u for u in units if not _unit_complete(u, existing, config)]
    skipped = len(units) - len(todo)
    if skipped:
        logger.info("resuming %s: %s of %s units already complete", config.name, skipped, len(units))

    # every sigma_c level of a (mu, s_min, realization) reuses one generated graph
    topologies = TopologyCache(Counter(u.topology_key for u in todo)) if real is None else None
    written, failures = asyncio.run(_run_units(todo, config, done, real, out_dir, records_path, topologies))
    _canonical_rewrite(records_path, config, units)
    (out_dir / FAILURES_FILE).write_text(json.dumps(failures, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if failures:
        logger.warning("%s cells failed; see %s", len(failures), out_dir / FAILURES_FILE)
    logger.info("sweep %s wrote %s new records to %s", config.name, written, records_path)
    return SweepOutcome(records_path=records_path, new_records=written, skipped_units=skipped, failures=failures)


def expected_record_count(config: SweepConfig, community_counts: Dict[Tuple, int]) -> int:
    """Records a complete sweep produces, given the ground-truth k of every unit key."""
    per_target = len(config.perturbation.beta_b) * len(config.perturbation.p) * len(config.perturbation.methods)
    return sum(len(_targets(config, k)) * per_target for k in community_counts.values())
