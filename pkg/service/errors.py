"""comconceal 전역 예외 계층.

서비스는 여기 정의된 예외만 던지고, 라우터가 이를 종료 코드로 변환한다.
모든 예외는 ValueError 를 상속하므로 기존 `except ValueError` 처리와도 호환된다.
"""

from __future__ import annotations


class ComconcealError(ValueError):
    """Base class for every error raised by the service layer."""


# graph-core
class GraphError(ComconcealError):
    pass


class DuplicateEdge(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class NodeOutOfRange(GraphError):
    pass


class ParseError(GraphError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionMismatch(GraphError):
    pass


class EmptyGraph(GraphError):
    pass


class SizeMismatch(GraphError):
    pass


# lfr-bench
class LfrError(ComconcealError):
    pass


class EmptySupport(LfrError):
    pass


class InfeasibleParams(LfrError):
    pass


class RewireBudgetExceeded(LfrError):
    pass


# perturbation
class PerturbationError(ComconcealError):
    pass


class TargetOutOfRange(PerturbationError):
    pass


class TargetNotACommunity(PerturbationError):
    pass


class EmptyCommunity(PerturbationError):
    pass


# dmon-cluster
class DmonError(ComconcealError):
    pass


class DivergenceDetected(DmonError):
    pass


# community-metrics
class MetricError(ComconcealError):
    pass


class EmptyTarget(MetricError):
    pass


class SingleCommunity(MetricError):
    pass


class TargetMissing(MetricError):
    pass


# stats-analysis
class StatsError(ComconcealError):
    pass


class ZeroBaseline(StatsError):
    pass


class UnpairedRows(StatsError):
    pass


class TooFewPoints(StatsError):
    pass


class DegenerateGroups(StatsError):
    pass


class EmptyInput(StatsError):
    pass


# experiment-cli
class ExperimentError(ComconcealError):
    pass


class ConfigError(ExperimentError):
    pass


class EmptySelection(ExperimentError):
    pass
