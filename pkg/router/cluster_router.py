"""cluster / evaluate / consensus 명령."""

from __future__ import annotations

import logging
import sys
from argparse import Namespace
from pathlib import Path

import numpy as np
import pandas as pd

from router.common import guarded, int_list
from service.dmon_service import DmonHyper, train
from service.graph_service import (
    load_edge_list,
    load_features,
    load_labeled_edge_list,
    load_partition,
    save_id_map,
    save_partition,
)
from service.louvain_service import CONSENSUS_RUNS, CONSENSUS_TAU, consensus_louvain
from service.metric_service import EVALUATE_METRICS, EcsParams, evaluate_row

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


@guarded
def run_cluster(args: Namespace) -> int:
    graph = load_edge_list(args.graph)
    features = load_features(args.features, n=graph.n)
    hyper = DmonHyper(
        k=args.k,
        hidden_dims=tuple(args.hidden),
        learning_rate=args.lr,
        epochs=args.epochs,
        dropout_rate=args.dropout,
        seed=args.seed,
        dropout_enabled=args.dropout > 0,
        collapse_weight=args.collapse_weight,
    )
    result = train(graph, features, hyper)
    save_partition(result.partition, args.out)
    out = Path(args.out)
    trace_path = Path(args.trace) if args.trace else out.with_name(out.name + ".trace.csv")
    trace = pd.DataFrame({"epoch": np.arange(result.loss_trace.size), "loss": result.loss_trace})
    trace.to_csv(trace_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(
        "DMoN k=%s → %s non-empty clusters, final loss %.6f",
        args.k, result.partition.k, float(result.loss_trace[-1]),
    )
    return 0


@guarded
def run_evaluate(args: Namespace) -> int:
    graph = load_edge_list(args.graph)
    truth = load_partition(args.truth, n=graph.n)
    detected = load_partition(args.detected, n=graph.n)
    features = load_features(args.features, n=graph.n) if args.features else None
    targets = args.target if args.target is not None else list(range(truth.k))
    ecs = EcsParams(args.ecs_alpha)
    rows = [evaluate_row(graph, truth, detected, t, args.metrics, x=features, ecs=ecs) for t in targets]
    frame = pd.DataFrame(rows)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(args.out, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    else:
        frame.to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return 0


@guarded
def run_consensus(args: Namespace) -> int:
    if args.labeled:
        graph, ids = load_labeled_edge_list(args.graph)
    else:
        graph, ids = load_edge_list(args.graph), None
    partition = consensus_louvain(graph, runs=args.runs, tau=args.tau, rng=np.random.default_rng(args.seed))
    save_partition(partition, args.out)
    if ids is not None:
        out = Path(args.out)
        save_id_map(ids, out.with_name(out.name + ".ids"))
    logger.info("consensus Louvain: %s communities over %s nodes", partition.k, partition.n)
    return 0


def _metric_list(text: str):
    return [part.strip() for part in text.split(",") if part.strip()]


def register(subparsers) -> None:
    clu = subparsers.add_parser("cluster", help="DMoN 학습 후 분할 저장")
    clu.add_argument("--graph", required=True)
    clu.add_argument("--features", required=True)
    clu.add_argument("--k", type=int, required=True, help="number of clusters")
    clu.add_argument("--hidden", type=int_list, default=[64], help="comma-separated hidden widths")
    clu.add_argument("--lr", type=float, default=0.01)
    clu.add_argument("--epochs", type=int, default=500)
    clu.add_argument("--dropout", type=float, default=0.5)
    clu.add_argument("--collapse-weight", type=float, default=1.0)
    clu.add_argument("--seed", type=int, default=0)
    clu.add_argument("--out", required=True, help="partition output path")
    clu.add_argument("--trace", default=None, help="loss trace CSV (default: <out>.trace.csv)")
    clu.set_defaults(handler=run_cluster)

    ev = subparsers.add_parser("evaluate", help="정답/탐지 분할 비교 지표")
    ev.add_argument("--graph", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--detected", required=True)
    ev.add_argument("--features", default=None, help="needed for descriptors")
    ev.add_argument("--target", type=int_list, default=None, help="community ids (default: all)")
    ev.add_argument("--metrics", type=_metric_list, default=["q", "m1", "m2", "ecs"],
                    help=f"comma-separated subset of {','.join(EVALUATE_METRICS)}")
    ev.add_argument("--ecs-alpha", type=float, default=0.9)
    ev.add_argument("--out", default=None, help="CSV path (default: stdout)")
    ev.set_defaults(handler=run_evaluate)

    con = subparsers.add_parser("consensus", help="합의 Louvain 라벨")
    con.add_argument("--graph", required=True)
    con.add_argument("--labeled", action="store_true", help="edge list uses arbitrary string ids")
    con.add_argument("--runs", type=int, default=CONSENSUS_RUNS)
    con.add_argument("--tau", type=float, default=CONSENSUS_TAU)
    con.add_argument("--seed", type=int, default=0)
    con.add_argument("--out", required=True)
    con.set_defaults(handler=run_consensus)
