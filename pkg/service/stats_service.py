"""실험 레코드 집계: 상대 개선율, 변화율, 추세 검정, 기술자 내보내기."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import binomtest, norm, spearmanr

from service.errors import (
    DegenerateGroups,
    EmptyInput,
    StatsError,
    TooFewPoints,
    UnpairedRows,
    ZeroBaseline,
)
from service.metric_service import DESCRIPTOR_FIELDS

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# identity of one experiment cell, method excluded
PAIR_KEYS = ("dataset", "mu", "s_min", "sigma_c", "beta_b", "p", "realization", "target")
RECORD_KEYS = PAIR_KEYS + ("method",)
TREND_CELL = ("dataset", "mu", "s_min", "p", "method")
SERIES_CELL = ("dataset", "method", "mu", "s_min", "sigma_c", "p")
EXPORT_PRECISION = "%.12g"


@dataclass(frozen=True)
class ExperimentRecord:
    dataset: str
    mu: float
    s_min: int
    sigma_c: float
    beta_b: float
    p: float
    method: str
    realization: int
    target: int
    seed: int
    k: int
    k_detected: int
    m1: float
    m2: float
    ecs: float
    q_before: float
    q_after: float
    m1_before: float
    m2_before: float
    b: int
    b_del: int
    b_add: int
    n_deleted: int
    n_added: int
    exhausted_deletion: bool
    exhausted_addition: bool
    avg_centroid_sq_distance: float
    community_size: int
    inter_intra_ratio: Optional[float]
    mean_degree: float
    community_degree: float
    mean_betweenness: float
    community_betweenness: float
    mean_closeness: float
    community_closeness: float
    intra_edges: int
    inter_edges: int
    ratio_defined: bool

    def as_row(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


RECORD_COLUMNS = tuple(f.name for f in fields(ExperimentRecord))
DESCRIPTOR_EXPORT_COLUMNS = RECORD_KEYS + tuple(DESCRIPTOR_FIELDS) + ("m1", "m2", "ecs")


@dataclass(frozen=True)
class JtResult:
    statistic: float
    z: float
    p_value: float


@dataclass(frozen=True)
class SignTestResult:
    positive: int
    negative: int
    p_value: float


def _frame(records: Union[pd.DataFrame, Iterable[ExperimentRecord]]) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        frame = records
    else:
        frame = pd.DataFrame([r.as_row() for r in records], columns=list(RECORD_COLUMNS))
    if frame.empty:
        raise EmptyInput("no experiment records")
    return frame


def load_records(path: PathLike) -> pd.DataFrame:
    frame = pd.read_csv(path)
    if frame.empty:
        raise EmptyInput(f"{path} holds no records")
    missing = [c for c in RECORD_KEYS + ("m1", "m2") if c not in frame.columns]
    if missing:
        raise StatsError(f"{path} lacks columns: {', '.join(missing)}")
    return frame


def relative_improvement(m_fcom: float, m_dice: float) -> float:
    """((M_fcom − M_dice) / M_dice) · 100."""
    if m_dice == 0:
        raise ZeroBaseline("DICE baseline is zero; relative improvement undefined")
    return (m_fcom - m_dice) / m_dice * 100.0


def paired_metric(records: Union[pd.DataFrame, Iterable[ExperimentRecord]], metric: str = "m2") -> pd.DataFrame:
    """Wide table with one row per cell and ``dice`` / ``fcom-dice`` columns of ``metric``."""
    frame = _frame(records)
    keys = [k for k in PAIR_KEYS if k in frame.columns]
    wide = frame.pivot_table(index=keys, columns="method", values=metric, aggfunc="first")
    for method in ("dice", "fcom-dice"):
        if method not in wide.columns:
            raise UnpairedRows(f"no {method} rows to pair against")
    unpaired = wide[["dice", "fcom-dice"]].isna().any(axis=1)
    if unpaired.any():
        raise UnpairedRows(f"{int(unpaired.sum())} cells lack a dice/fcom-dice pair")
    return wide[["dice", "fcom-dice"]].reset_index()


def mean_relative_improvement(
    records: Union[pd.DataFrame, Iterable[ExperimentRecord]],
    group_keys: Sequence[str] = ("mu", "sigma_c"),
    metric: str = "m2",
) -> pd.DataFrame:
    """(μ, σ_c) 셀별 FCom-DICE 대비 DICE 상대 개선율의 평균/중앙값/표준편차.

    Pairs with a zero DICE baseline are excluded and counted in ``zero_baseline``.
    """
    wide = paired_metric(records, metric)
    zero = wide["dice"] == 0
    wide = wide.assign(
        improvement=np.where(zero, np.nan, (wide["fcom-dice"] - wide["dice"]) / wide["dice"].where(~zero) * 100.0),
        zero_baseline=zero.astype(int),
    )
    grouped = wide.groupby(list(group_keys), sort=True)
    table = grouped["improvement"].agg(mean="mean", median="median", std="std", n_pairs="count")
    table["zero_baseline"] = grouped["zero_baseline"].sum()
    table["std"] = table["std"].fillna(0.0)
    return table.reset_index()


def rate_of_change(metric_series: Sequence[Tuple[float, float]]) -> float:
    """Mean of successive finite differences ΔM/Δβ_b over one contiguous series."""
    if len(metric_series) < 2:
        raise TooFewPoints(f"rate of change needs at least 2 points, got {len(metric_series)}")
    xs = np.array([float(b) for b, _ in metric_series])
    ys = np.array([float(v) for _, v in metric_series])
    steps = np.diff(xs)
    if np.any(steps <= 0):
        raise StatsError("budget values must be strictly increasing")
    return float(np.mean(np.diff(ys) / steps))


def rate_of_change_table(records: Union[pd.DataFrame, Iterable[ExperimentRecord]], metric: str = "m2") -> pd.DataFrame:
    frame = _frame(records)
    keys = [k for k in SERIES_CELL if k in frame.columns]
    means = frame.groupby(keys + ["beta_b"], sort=True)[metric].mean().reset_index()
    rows: List[Dict[str, Any]] = []
    for cell, part in means.groupby(keys, sort=True):
        series = list(zip(part["beta_b"], part[metric]))
        if len(series) < 2:
            continue
        row = dict(zip(keys, cell if isinstance(cell, tuple) else (cell,)))
        row["rate"] = rate_of_change(series)
        row["points"] = len(series)
        rows.append(row)
    if not rows:
        raise TooFewPoints("no cell has two or more budget values")
    return pd.DataFrame(rows)


def _pair_counts(lower: np.ndarray, upper: np.ndarray) -> float:
    # Σ over x in lower, y in upper of [x < y] + ½[x == y]
    ys = np.sort(upper)
    left = np.searchsorted(ys, lower, side="left")
    right = np.searchsorted(ys, lower, side="right")
    greater = ys.size - right
    ties = right - left
    return float(np.sum(greater) + 0.5 * np.sum(ties))


def jonckheere_terpstra(groups: Sequence[Sequence[float]], direction: str = "increasing") -> JtResult:
    """단측 Jonckheere–Terpstra 추세 검정 (정규 근사, 동점은 1/2 로 계산)."""
    if direction not in ("increasing", "decreasing"):
        raise StatsError(f"direction must be 'increasing' or 'decreasing', got {direction!r}")
    samples = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(samples) < 2 or any(s.size == 0 for s in samples):
        raise DegenerateGroups("JT test needs at least two non-empty groups")
    if direction == "decreasing":
        samples = samples[::-1]
    statistic = sum(
        _pair_counts(samples[i], samples[j]) for i in range(len(samples)) for j in range(i + 1, len(samples))
    )
    sizes = np.array([s.size for s in samples], dtype=np.float64)
    total = sizes.sum()
    mean = (total**2 - np.sum(sizes**2)) / 4.0
    variance = (total**2 * (2 * total + 3) - np.sum(sizes**2 * (2 * sizes + 3))) / 72.0
    if variance <= 0:
        raise DegenerateGroups("JT variance is zero")
    z = (statistic - mean) / math.sqrt(variance)
    return JtResult(statistic=statistic, z=float(z), p_value=p_value_from_z(z))


def p_value_from_z(z: float) -> float:
    return float(norm.sf(z))


def stouffer_combine(z_values: Sequence[float]) -> float:
    zs = np.asarray(list(z_values), dtype=np.float64)
    if zs.size == 0:
        raise EmptyInput("Stouffer combination needs at least one z value")
    return float(zs.sum() / math.sqrt(zs.size))


def sign_test(differences: Iterable[float]) -> SignTestResult:
    """One-sided binomial sign test that positive differences dominate; zeros are dropped."""
    diffs = np.asarray(list(differences), dtype=np.float64)
    positive = int(np.sum(diffs > 0))
    negative = int(np.sum(diffs < 0))
    if positive + negative == 0:
        raise EmptyInput("sign test needs at least one non-zero difference")
    result = binomtest(positive, positive + negative, 0.5, alternative="greater")
    return SignTestResult(positive=positive, negative=negative, p_value=float(result.pvalue))


def _none_if_nan(value: float) -> Optional[float]:
    return None if value is None or not np.isfinite(value) else float(value)


def trend_summary(records: Union[pd.DataFrame, Iterable[ExperimentRecord]], metric: str = "m2") -> Dict[str, Any]:
    """σ_c 추세(JT + Stouffer), β_b 단조성(Spearman), 방법 비교(부호 검정) 요약.

    JT groups are the σ_c levels in ascending order tested for a decreasing
    trend, i.e. smaller σ_c gives larger ``metric``; one z per
    (dataset, μ, s_min, p, method) cell.
    """
    frame = _frame(records)
    summary: Dict[str, Any] = {"metric": metric, "grouping": list(TREND_CELL)}

    cells: List[Dict[str, Any]] = []
    for cell, part in frame.groupby(list(TREND_CELL), sort=True):
        levels = sorted(part["sigma_c"].unique())
        if len(levels) < 2:
            continue
        groups = [part.loc[part["sigma_c"] == s, metric].to_numpy() for s in levels]
        try:
            jt = jonckheere_terpstra(groups, direction="decreasing")
        except DegenerateGroups as exc:
            logger.warning("skipping JT cell %s: %s", cell, exc)
            continue
        cells.append({**dict(zip(TREND_CELL, cell)), "z": jt.z, "p_value": jt.p_value, "statistic": jt.statistic})
    summary["sigma_c_trend"] = {"cells": cells}
    if cells:
        combined = stouffer_combine([c["z"] for c in cells])
        summary["sigma_c_trend"].update({"stouffer_z": combined, "p_value": p_value_from_z(combined)})

    monotone: List[Dict[str, Any]] = []
    means = frame.groupby(list(SERIES_CELL) + ["beta_b"], sort=True)[metric].mean().reset_index()
    for cell, part in means.groupby(list(SERIES_CELL), sort=True):
        if len(part) < 2:
            continue
        rho = spearmanr(part["beta_b"], part[metric])[0] if part[metric].nunique() > 1 else float("nan")
        monotone.append({**dict(zip(SERIES_CELL, cell)), "spearman_rho": _none_if_nan(rho), "points": len(part)})
    summary["budget_monotonicity"] = monotone

    methods = set(frame["method"].unique())
    if {"dice", "fcom-dice"} <= methods:
        wide = paired_metric(frame, metric)
        diffs = (wide["fcom-dice"] - wide["dice"]).to_numpy()
        comparison: Dict[str, Any] = {"pairs": int(diffs.size)}
        try:
            test = sign_test(diffs)
            comparison.update({"positive": test.positive, "negative": test.negative, "p_value": test.p_value})
        except EmptyInput:
            comparison["p_value"] = None
        improvements = mean_relative_improvement(frame, ("mu",), metric)
        comparison["by_mu"] = [
            {"mu": float(r.mu), "median": _none_if_nan(r.median), "mean": _none_if_nan(r.mean), "n_pairs": int(r.n_pairs)}
            for r in improvements.itertuples(index=False)
        ]
        summary["method_comparison"] = comparison
    return summary


def export_descriptors(records: Union[pd.DataFrame, Iterable[ExperimentRecord]], path: PathLike) -> Path:
    """외부 분석 도구용 기술자 CSV. 빈 값과 정의되지 않은 비율은 빈 칸으로 남긴다."""
    frame = _frame(records)
    columns = [c for c in DESCRIPTOR_EXPORT_COLUMNS if c in frame.columns]
    out = frame.loc[:, columns].copy()
    if "inter_intra_ratio" in out.columns:
        out["inter_intra_ratio"] = out["inter_intra_ratio"].replace([np.inf, -np.inf], np.nan)
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    out.to_csv(target, index=False, na_rep="", float_format=EXPORT_PRECISION, lineterminator="\n")
    return target
