"""experiment / report / ingest 명령."""

from __future__ import annotations

import logging
from argparse import Namespace
from pathlib import Path

from pydantic import ValidationError

from router.common import EXIT_CELL_FAILURES, guarded, int_list, write_json
from service.errors import ConfigError, StatsError
from service.experiment_service import ingest_real_network, run_experiment
from service.graph_service import save_edge_list, save_features, save_id_map, save_partition
from service.lfr_service import empirical_mixing
from service.plot_service import emit_plots
from service.stats_service import (
    export_descriptors,
    load_records,
    mean_relative_improvement,
    rate_of_change_table,
    trend_summary,
)
from setting import THREADS
from setting.sweep_config import RealNetworkSpec, load_sweep_config

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"
REPORT_METRICS = ("m1", "m2")


@guarded
def run_experiment_command(args: Namespace) -> int:
    config = load_sweep_config(args.config).with_overrides(
        threads=args.threads if args.threads is not None else THREADS,
        targets=args.targets,
        output_dir=args.out_dir,
    )
    outcome = run_experiment(config)
    if outcome.failures:
        logger.error("%s cells failed", len(outcome.failures))
        return EXIT_CELL_FAILURES
    return 0


@guarded
def run_report(args: Namespace) -> int:
    records = load_records(args.input)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trends = {}
    for metric in REPORT_METRICS:
        try:
            table = mean_relative_improvement(records, ("mu", "sigma_c"), metric)
            table.to_csv(out_dir / f"improvement_{metric}.csv", index=False, float_format=FLOAT_FORMAT,
                         lineterminator="\n")
        except StatsError as exc:
            logger.warning("no improvement table for %s: %s", metric, exc)
        try:
            rates = rate_of_change_table(records, metric)
            rates.to_csv(out_dir / f"rate_of_change_{metric}.csv", index=False, float_format=FLOAT_FORMAT,
                         lineterminator="\n")
        except StatsError as exc:
            logger.warning("no rate-of-change table for %s: %s", metric, exc)
        try:
            trends[metric] = trend_summary(records, metric)
        except StatsError as exc:
            logger.warning("no trend summary for %s: %s", metric, exc)
    write_json(out_dir / "trend.json", trends)
    export_descriptors(records, out_dir / "descriptors.csv")
    if not args.no_plots:
        emit_plots(records, out_dir / "plots")
    logger.info("report written to %s", out_dir)
    return 0


@guarded
def run_ingest(args: Namespace) -> int:
    try:
        spec = RealNetworkSpec(
            name=args.name,
            edges=args.edges,
            features=args.features,
            use_original_features=args.use_original_features,
            sigma_c=args.sigma_c,
            take_lcc=not args.no_lcc,
            labeled_ids=not args.numeric_ids,
            consensus_runs=args.runs,
            tau=args.tau,
            d=args.d,
        )
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    network = ingest_real_network(spec, seed=args.seed)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    save_edge_list(network.graph, prefix.with_name(prefix.name + ".edges"))
    save_partition(network.partition, prefix.with_name(prefix.name + ".partition"))
    if network.features is not None:
        save_features(network.features, prefix.with_name(prefix.name + ".features.csv"))
    if network.ids is not None:
        save_id_map(network.ids, prefix.with_name(prefix.name + ".ids"))
    logger.info(
        "%s: n=%s m=%s k=%s mixing=%.4f",
        spec.name, network.graph.n, network.graph.m, network.partition.k,
        empirical_mixing(network.graph, network.partition),
    )
    return 0


def register(subparsers) -> None:
    exp = subparsers.add_parser("experiment", help="설정 파일 기반 스윕 실행 (재개 가능)")
    exp.add_argument("--config", required=True, help="sweep JSON, e.g. configs/desk.json or configs/full.json")
    exp.add_argument("--threads", type=int, default=None,
                     help="worker count (default: COMCONCEAL_THREADS, then the config value)")
    exp.add_argument("--targets", type=int_list, default=None, help="restrict to these community ids")
    exp.add_argument("--out-dir", type=Path, default=None)
    exp.set_defaults(handler=run_experiment_command)

    rep = subparsers.add_parser("report", help="레코드 집계표, 추세 검정, 기술자, 그림")
    rep.add_argument("--in", dest="input", required=True, help="records.csv of a sweep")
    rep.add_argument("--out-dir", required=True)
    rep.add_argument("--no-plots", action="store_true")
    rep.set_defaults(handler=run_report)

    ing = subparsers.add_parser("ingest", help="실제 네트워크 수집 (LCC + 합의 Louvain)")
    ing.add_argument("--edges", required=True)
    ing.add_argument("--name", default="real")
    ing.add_argument("--features", default=None)
    ing.add_argument("--use-original-features", action="store_true")
    ing.add_argument("--sigma-c", type=float, default=None)
    ing.add_argument("--no-lcc", action="store_true")
    ing.add_argument("--numeric-ids", action="store_true", help="edge list already uses 0..n-1 ids")
    ing.add_argument("--runs", type=int, default=50)
    ing.add_argument("--tau", type=float, default=0.3)
    ing.add_argument("--d", type=int, default=32)
    ing.add_argument("--seed", type=int, default=0)
    ing.add_argument("--out-prefix", required=True)
    ing.set_defaults(handler=run_ingest)
