"""generate / perturb 명령."""

from __future__ import annotations

import logging
from argparse import Namespace
from pathlib import Path

import numpy as np

from router.common import guarded
from service.graph_service import load_edge_list, load_features, load_partition, save_edge_list, save_features
from service.lfr_service import FeatureGenParams, LfrParams, empirical_mixing, generate_features, generate_lfr, save_benchmark
from service.perturb_service import METHODS, PerturbSpec, perturb

logger = logging.getLogger(__name__)


@guarded
def run_generate(args: Namespace) -> int:
    params = LfrParams(
        n=args.n,
        avg_degree=args.avg_degree,
        k_max=args.k_max,
        alpha=args.alpha,
        beta=args.beta,
        s_min=args.s_min,
        s_max=args.s_max,
        mu=args.mu,
        mixing_tolerance=args.tolerance,
    )
    bench = generate_lfr(params, seed=args.seed)
    features = generate_features(
        bench.partition, FeatureGenParams(d=args.d, sigma_c=args.sigma_c, sigma=args.sigma, seed=args.seed)
    )
    written = save_benchmark(args.out_prefix, bench.graph, bench.partition, features)
    logger.info(
        "generated n=%s m=%s k=%s mixing=%.4f → %s",
        bench.graph.n, bench.graph.m, bench.partition.k, empirical_mixing(bench.graph, bench.partition),
        ", ".join(str(p) for p in written.values()),
    )
    return 0


@guarded
def run_perturb(args: Namespace) -> int:
    graph = load_edge_list(args.graph)
    partition = load_partition(args.partition, n=graph.n)
    features = load_features(args.features, n=graph.n) if args.features else None
    members = partition.members(args.target)
    spec = PerturbSpec(target=frozenset(members.tolist()), beta_b=args.beta, p=args.p, seed=args.seed)
    result = perturb(args.method, graph, spec, x=features, p=partition, rng=np.random.default_rng(args.seed))

    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    save_edge_list(result.graph, prefix.with_name(prefix.name + ".edges"))
    if result.features is not None:
        save_features(result.features, prefix.with_name(prefix.name + ".features.csv"))
    result.save_ledger(prefix.with_name(prefix.name + ".ledger.json"))
    logger.info(
        "%s on community %s: budget=%s deleted=%s added=%s",
        args.method, args.target, result.budget.b, len(result.deleted), len(result.added),
    )
    return 0


def register(subparsers) -> None:
    gen = subparsers.add_parser("generate", help="LFR 벤치마크 그래프 + 가우시안 특징 생성")
    gen.add_argument("--n", type=int, default=1000)
    gen.add_argument("--avg-degree", type=float, default=25.0)
    gen.add_argument("--k-max", type=int, default=100)
    gen.add_argument("--alpha", type=float, default=-2.0, help="degree exponent")
    gen.add_argument("--beta", type=float, default=-1.1, help="community size exponent")
    gen.add_argument("--s-min", type=int, default=10)
    gen.add_argument("--s-max", type=int, default=None)
    gen.add_argument("--mu", type=float, default=0.1)
    gen.add_argument("--tolerance", type=float, default=0.03, help="allowed |achieved mixing - mu|")
    gen.add_argument("--sigma-c", type=float, default=1.0)
    gen.add_argument("--sigma", type=float, default=1.0)
    gen.add_argument("--d", type=int, default=32)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out-prefix", required=True)
    gen.set_defaults(handler=run_generate)

    per = subparsers.add_parser("perturb", help="DICE / FCom-DICE 로 타깃 커뮤니티 섭동")
    per.add_argument("--graph", required=True)
    per.add_argument("--partition", required=True)
    per.add_argument("--features", default=None)
    per.add_argument("--method", choices=METHODS, default="fcom-dice")
    per.add_argument("--target", type=int, required=True, help="ground-truth community id")
    per.add_argument("--beta", type=float, required=True, help="budget as a fraction of intra edges")
    per.add_argument("--p", type=float, default=0.5, help="share of the budget spent on deletions")
    per.add_argument("--seed", type=int, default=0)
    per.add_argument("--out-prefix", required=True)
    per.set_defaults(handler=run_perturb)
