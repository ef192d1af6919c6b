"""CLI 라우터 패키지: 명령군별 register(subparsers)."""

from . import bench_router, cluster_router, experiment_router

__all__ = ("bench_router", "cluster_router", "experiment_router")
