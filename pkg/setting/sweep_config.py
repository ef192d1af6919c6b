"""스윕 설정 모델 (JSON → pydantic)."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from service.errors import ConfigError

logger = logging.getLogger(__name__)

Method = Literal["dice", "fcom-dice"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LfrGrid(_Strict):
    n: int = Field(1000, ge=2)
    avg_degree: float = Field(25.0, ge=1.0)
    k_max: int = Field(100, ge=1)
    alpha: float = Field(-2.0, lt=0)
    beta: float = Field(-1.1, lt=0)
    s_min: List[int] = Field(default_factory=lambda: [10])
    s_max: Optional[int] = None
    mu: List[float] = Field(default_factory=lambda: [0.1])
    mixing_tolerance: float = Field(0.03, gt=0)
    max_rewire_iters: Optional[int] = Field(None, ge=0)

    @field_validator("s_min", "mu")
    @classmethod
    def _nonempty(cls, value: list) -> list:
        if not value:
            raise ValueError("grid must not be empty")
        return value

    @field_validator("mu")
    @classmethod
    def _mixing_range(cls, value: List[float]) -> List[float]:
        if any(not 0.0 <= mu < 1.0 for mu in value):
            raise ValueError("every mu must lie in [0, 1)")
        return value


class FeatureGrid(_Strict):
    sigma_c: List[float] = Field(default_factory=lambda: [1.0])
    d: int = Field(32, ge=1)
    sigma: float = Field(1.0, gt=0)

    @field_validator("sigma_c")
    @classmethod
    def _positive(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("grid must not be empty")
        if any(s <= 0 for s in value):
            raise ValueError("every sigma_c must be positive")
        return value


class PerturbationGrid(_Strict):
    beta_b: List[float] = Field(default_factory=lambda: [0.01, 0.2, 0.4, 0.6, 0.8, 1.0])
    p: List[float] = Field(default_factory=lambda: [0.5])
    methods: List[Method] = Field(default_factory=lambda: ["dice", "fcom-dice"])

    @field_validator("beta_b", "p")
    @classmethod
    def _unit_interval(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("grid must not be empty")
        if any(not 0.0 <= v <= 1.0 for v in value):
            raise ValueError("values must lie in [0, 1]")
        return value

    @field_validator("methods")
    @classmethod
    def _methods(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("at least one method is required")
        return value


class DmonConfig(_Strict):
    hidden_dims: List[int] = Field(default_factory=lambda: [64])
    learning_rate: float = Field(0.01, ge=0)
    epochs: int = Field(500, ge=1)
    dropout_rate: float = Field(0.5, ge=0, lt=1)
    init_scale: float = Field(1.0, gt=0)
    collapse_weight: float = Field(1.0, ge=0)


class RealNetworkSpec(_Strict):
    name: str = "real"
    edges: Path
    features: Optional[Path] = None
    use_original_features: bool = False
    sigma_c: Optional[float] = Field(None, gt=0)
    take_lcc: bool = True
    labeled_ids: bool = True
    consensus_runs: int = Field(50, ge=1)
    tau: float = Field(0.3, gt=0, le=1)
    d: int = Field(32, ge=1)

    @model_validator(mode="after")
    def _feature_source(self) -> "RealNetworkSpec":
        if self.use_original_features:
            if self.features is None:
                raise ValueError("use_original_features needs a features path")
        elif (self.features is None) == (self.sigma_c is None):
            raise ValueError("exactly one of features or sigma_c is required without original features")
        return self


class SweepConfig(_Strict):
    name: str = "sweep"
    lfr: LfrGrid = Field(default_factory=LfrGrid)
    features: FeatureGrid = Field(default_factory=FeatureGrid)
    perturbation: PerturbationGrid = Field(default_factory=PerturbationGrid)
    dmon: DmonConfig = Field(default_factory=DmonConfig)
    realizations: int = Field(1, ge=1)
    master_seed: int = 0
    output_dir: Optional[Path] = None
    threads: int = Field(1, ge=1)
    targets: Optional[List[int]] = None
    ecs_alpha: float = Field(0.9, gt=0, lt=1)
    descriptors: bool = True
    save_artifacts: bool = False
    warn_runtime: bool = False
    real_network: Optional[RealNetworkSpec] = None

    def with_overrides(self, **changes) -> "SweepConfig":
        update = {k: v for k, v in changes.items() if v is not None}
        if not update:
            return self
        try:
            return SweepConfig.model_validate({**self.model_dump(), **update})
        except ValidationError as exc:
            raise ConfigError(f"invalid override {update}: {exc}") from exc


def load_sweep_config(path: Path | str) -> SweepConfig:
    """JSON 설정 파일을 읽어 검증한다. 형식/검증 오류는 ConfigError 로 변환."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    try:
        config = SweepConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if config.warn_runtime:
        logger.warning("config %s is the full-scale grid; expect a very long run", config.name)
    return config
