"""comconceal 진입점: 로깅 설정 후 하위 명령으로 분기한다."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from router import bench_router, cluster_router, experiment_router
from setting import APP_NAME, APP_VERSION, LOG_LEVEL

LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=APP_NAME,
        description="Conceal a target community from DMoN clustering and measure how well it hides.",
    )
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    parser.add_argument(
        "--log-level",
        default=LOG_LEVEL,
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        type=str.upper,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for router in (bench_router, cluster_router, experiment_router):
        router.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, force=True)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
