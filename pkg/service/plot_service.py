"""레코드 → SVG 차트 (예산 대비 M1/M2 선 그래프, 상대 개선율 히트맵)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader

from service.errors import EmptySelection, StatsError
from service.stats_service import ExperimentRecord, RECORD_COLUMNS, mean_relative_improvement
from setting import TEMPLATE_DIR

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

METHOD_COLORS = {"dice": "#1f77b4", "fcom-dice": "#d62728"}
FALLBACK_COLOR = "#555555"
LINE_CELL = ("dataset", "mu", "s_min", "sigma_c", "p")
HEATMAP_CELL = ("dataset", "s_min", "p")

_env = Environment(
    loader=FileSystemLoader(str(TEMPLATE_DIR / "plots")),
    autoescape=True,
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
)


@dataclass(frozen=True)
class PlotSpec:
    metrics: Tuple[str, ...] = ("m1", "m2")
    heatmap_metrics: Tuple[str, ...] = ("m1", "m2")
    width: int = 640
    height: int = 400
    margin: int = 56
    dataset: Optional[str] = None
    mu: Optional[float] = None
    sigma_c: Optional[float] = None


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _slug(value: Any) -> str:
    text = f"{value:g}" if isinstance(value, (float, np.floating)) else str(value)
    return text.replace("-", "m").replace(".", "p")


def _select(records: Union[pd.DataFrame, Iterable[ExperimentRecord]], spec: PlotSpec) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        frame = records
    else:
        frame = pd.DataFrame([r.as_row() for r in records], columns=list(RECORD_COLUMNS))
    if spec.dataset is not None:
        frame = frame[frame["dataset"] == spec.dataset]
    if spec.mu is not None:
        frame = frame[np.isclose(frame["mu"], spec.mu)]
    if spec.sigma_c is not None:
        frame = frame[np.isclose(frame["sigma_c"], spec.sigma_c)]
    if frame.empty:
        raise EmptySelection("no records match the plot selection")
    return frame


class _Scale:
    """Linear map from a data interval onto a pixel interval."""

    def __init__(self, lo: float, hi: float, start: float, end: float) -> None:
        if hi <= lo:
            hi = lo + 1.0
        self.lo, self.hi, self.start, self.end = lo, hi, start, end

    def __call__(self, value: float) -> float:
        return self.start + (value - self.lo) / (self.hi - self.lo) * (self.end - self.start)

    def ticks(self, count: int = 5) -> List[Tuple[float, str]]:
        return [(self(v), f"{v:.3g}") for v in np.linspace(self.lo, self.hi, count)]


def budget_series(frame: pd.DataFrame, metric: str) -> Dict[str, pd.DataFrame]:
    """method → per-β_b mean and sample s.d. (0 when a budget has a single record)."""
    out: Dict[str, pd.DataFrame] = {}
    for method, part in frame.groupby("method", sort=True):
        stats = part.groupby("beta_b", sort=True)[metric].agg(["mean", "std"]).reset_index()
        stats["std"] = stats["std"].fillna(0.0)
        out[str(method)] = stats
    return out


def render_line_chart(title: str, metric: str, series: Dict[str, pd.DataFrame], spec: PlotSpec) -> str:
    margin = spec.margin
    xs = np.concatenate([s["beta_b"].to_numpy(dtype=float) for s in series.values()])
    upper = max(float((s["mean"] + s["std"]).max()) for s in series.values())
    lower = min(float((s["mean"] - s["std"]).min()) for s in series.values())
    x = _Scale(float(xs.min()), float(xs.max()), margin, spec.width - margin / 2)
    y = _Scale(min(0.0, lower), max(1.0, upper), spec.height - margin, margin / 2)

    lines = []
    for method, stats in series.items():
        bx = stats["beta_b"].to_numpy(dtype=float)
        mean = stats["mean"].to_numpy(dtype=float)
        sd = stats["std"].to_numpy(dtype=float)
        top = [f"{_fmt(x(b))},{_fmt(y(v))}" for b, v in zip(bx, mean + sd)]
        bottom = [f"{_fmt(x(b))},{_fmt(y(v))}" for b, v in zip(bx[::-1], (mean - sd)[::-1])]
        lines.append(
            {
                "method": method,
                "color": METHOD_COLORS.get(method, FALLBACK_COLOR),
                "points": " ".join(f"{_fmt(x(b))},{_fmt(y(v))}" for b, v in zip(bx, mean)),
                "band": " ".join(top + bottom),
                "markers": [(_fmt(x(b)), _fmt(y(v))) for b, v in zip(bx, mean)],
            }
        )
    return _env.get_template("line_chart.svg.j2").render(
        title=title,
        width=spec.width,
        height=spec.height,
        left=margin,
        right=_fmt(spec.width - margin / 2),
        top=_fmt(margin / 2),
        bottom=spec.height - margin,
        x_label="β_b",
        y_label=metric.upper(),
        x_ticks=[(_fmt(p), label) for p, label in x.ticks()],
        y_ticks=[(_fmt(p), label) for p, label in y.ticks()],
        lines=lines,
    )


def _heat_color(value: float, bound: float) -> str:
    if not math.isfinite(value):
        return "#dddddd"
    t = max(-1.0, min(1.0, value / bound)) if bound > 0 else 0.0
    # white at zero, red for gains, blue for losses
    fade = int(round(255 * (1.0 - abs(t))))
    if t >= 0:
        return f"#ff{fade:02x}{fade:02x}"
    return f"#{fade:02x}{fade:02x}ff"


def render_heatmap(title: str, table: pd.DataFrame, spec: PlotSpec) -> str:
    mus = sorted(table["mu"].unique())
    sigmas = sorted(table["sigma_c"].unique())
    margin = spec.margin
    cell_w = (spec.width - 2 * margin) / len(sigmas)
    cell_h = (spec.height - 2 * margin) / len(mus)
    finite = table["mean"].replace([np.inf, -np.inf], np.nan).dropna()
    bound = float(finite.abs().max()) if not finite.empty else 0.0

    cells = []
    for row in table.itertuples(index=False):
        col = sigmas.index(row.sigma_c)
        line = mus.index(row.mu)
        mean = float(row.mean)
        label = "n/a" if not math.isfinite(mean) else f"{mean:.1f}"
        cells.append(
            {
                "x": _fmt(margin + col * cell_w),
                "y": _fmt(margin + line * cell_h),
                "w": _fmt(cell_w),
                "h": _fmt(cell_h),
                "cx": _fmt(margin + (col + 0.5) * cell_w),
                "cy": _fmt(margin + (line + 0.5) * cell_h),
                "fill": _heat_color(mean, bound),
                "label": label,
                "spread": f"±{float(row.std):.1f}" if math.isfinite(mean) else "",
            }
        )
    return _env.get_template("heatmap.svg.j2").render(
        title=title,
        width=spec.width,
        height=spec.height,
        cells=cells,
        col_labels=[(_fmt(margin + (i + 0.5) * cell_w), f"{s:g}") for i, s in enumerate(sigmas)],
        row_labels=[(_fmt(margin + (i + 0.5) * cell_h), f"{m:g}") for i, m in enumerate(mus)],
        label_y=_fmt(margin - 8),
        label_x=_fmt(margin - 8),
        x_title_y=_fmt(spec.height - margin / 2),
        center_x=_fmt(spec.width / 2),
    )


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def _cell_title(keys: Sequence[str], cell: Tuple) -> str:
    return ", ".join(f"{k}={v:g}" if isinstance(v, (float, np.floating)) else f"{k}={v}" for k, v in zip(keys, cell))


def emit_plots(
    records: Union[pd.DataFrame, Iterable[ExperimentRecord]],
    out_dir: PathLike,
    spec: PlotSpec = PlotSpec(),
) -> List[Path]:
    """선택된 레코드로 선 그래프와 히트맵 SVG 를 만든다. 같은 입력이면 같은 바이트를 쓴다."""
    frame = _select(records, spec)
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []

    for cell, part in frame.groupby(list(LINE_CELL), sort=True):
        title = _cell_title(LINE_CELL, cell)
        suffix = "_".join(_slug(v) for v in cell)
        for metric in spec.metrics:
            svg = render_line_chart(title, metric, budget_series(part, metric), spec)
            written.append(_write(target / f"{metric}_vs_budget_{suffix}.svg", svg))

    methods = set(frame["method"].unique())
    if {"dice", "fcom-dice"} <= methods:
        for cell, part in frame.groupby(list(HEATMAP_CELL), sort=True):
            suffix = "_".join(_slug(v) for v in cell)
            for metric in spec.heatmap_metrics:
                try:
                    table = mean_relative_improvement(part, ("mu", "sigma_c"), metric)
                except StatsError as exc:
                    logger.warning("no heatmap for %s %s: %s", cell, metric, exc)
                    continue
                title = f"{metric.upper()} improvement (%) {_cell_title(HEATMAP_CELL, cell)}"
                written.append(_write(target / f"improvement_{metric}_{suffix}.svg", render_heatmap(title, table, spec)))
    else:
        logger.info("heatmaps need both methods; found %s", sorted(methods))

    if not written:
        raise EmptySelection("selection produced no plots")
    logger.info("wrote %s plots to %s", len(written), target)
    return written
