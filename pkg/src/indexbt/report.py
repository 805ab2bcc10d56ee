"""Comparison tables, fee tables and SVG cumulative-value charts."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date
from html import escape
from typing import Mapping, Sequence

from .index_engine import BacktestResult, format_money

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")

WIDTH, HEIGHT = 960, 540
LEFT, RIGHT, TOP, BOTTOM = 90, 200, 50, 60
COORD_DIGITS = 2


def format_millions(x: float) -> str:
    if abs(x) >= 1e6:
        return f"${x / 1e6:,.2f} mil"
    return f"${x:,.2f}"


def write_final_values(path, results: Sequence[BacktestResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "date", "final_value"])
        for r in results:
            d, v = r.daily_values[-1]
            w.writerow([r.strategy.label, d.isoformat(), format_money(v)])


def write_fee_table(path, results: Sequence[BacktestResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "trades", "admin_nominal", "spread_nominal", "total_nominal",
                    "admin_deflated", "spread_deflated", "total_deflated"])
        for r in results:
            f = r.fee_totals
            real = [f.admin_real, f.spread_real, f.total_real]
            w.writerow([r.strategy.label, len(r.trades), format_money(f.admin), format_money(f.spread),
                        format_money(f.total), *("" if x is None else format_money(x) for x in real)])


def summary_text(results: Sequence[BacktestResult], stats: Mapping[str, object]) -> str:
    lines = []
    end = results[0].daily_values[-1][0]
    lines.append(f"Portfolio values on {end.isoformat()}")
    for r in results:
        lines.append(f"  {r.strategy.label:<24} {format_millions(r.final_value)}")
    lines.append("")
    lines.append("Transaction fees (nominal / deflated to reference month)")
    for r in results:
        f = r.fee_totals
        real = "n/a" if f.total_real is None else format_millions(f.total_real)
        lines.append(f"  {r.strategy.label:<24} {format_millions(f.total)} / {real}  ({len(r.trades)} trades)")
    lines.append("")
    lines.append("Annual returns, %: arithmetic / geometric / SD / Sharpe")
    for r in results:
        s = stats.get(r.strategy.label)
        if s is None:
            lines.append(f"  {r.strategy.label:<24} (fewer than two years)")
        else:
            lines.append(f"  {r.strategy.label:<24} {s.arithmetic:.2f} / {s.geometric:.2f} / "
                         f"{s.sd:.2f} / {s.sharpe:.2f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChartFrame:
    """Maps (date, value) pairs onto the plotting area."""

    x_min: int
    x_max: int
    y_min: float
    y_max: float
    log_scale: bool

    def _t(self, v: float) -> float:
        return math.log10(v) if self.log_scale else v

    def x(self, d: date) -> float:
        span = max(self.x_max - self.x_min, 1)
        return LEFT + (d.toordinal() - self.x_min) / span * (WIDTH - LEFT - RIGHT)

    def y(self, v: float) -> float:
        lo, hi = self._t(self.y_min), self._t(self.y_max)
        frac = (self._t(v) - lo) / (hi - lo) if hi > lo else 0.5
        return HEIGHT - BOTTOM - frac * (HEIGHT - TOP - BOTTOM)

    def value_at(self, py: float) -> float:
        lo, hi = self._t(self.y_min), self._t(self.y_max)
        t = lo + (HEIGHT - BOTTOM - py) / (HEIGHT - TOP - BOTTOM) * (hi - lo)
        return 10 ** t if self.log_scale else t


def chart_frame(series: Mapping[str, Sequence[tuple[date, float]]], log_scale: bool = True) -> ChartFrame:
    dates = [d for s in series.values() for d, _ in s]
    values = [v for s in series.values() for _, v in s]
    lo, hi = min(values), max(values)
    if log_scale:
        lo = 10 ** math.floor(math.log10(lo))
        hi = 10 ** math.ceil(math.log10(hi))
        if hi == lo:
            hi = lo * 10
    else:
        pad = (hi - lo) * 0.05 or abs(hi) * 0.05 or 1.0
        lo, hi = lo - pad, hi + pad
    return ChartFrame(min(dates).toordinal(), max(dates).toordinal(), lo, hi, log_scale)


def _y_ticks(frame: ChartFrame) -> list[float]:
    if frame.log_scale:
        lo, hi = round(math.log10(frame.y_min)), round(math.log10(frame.y_max))
        mults = (1, 2, 5) if hi - lo <= 3 else (1,)
        return [m * 10 ** e for e in range(lo, hi + 1) for m in mults if m * 10 ** e <= frame.y_max]
    step = 10 ** math.floor(math.log10((frame.y_max - frame.y_min) / 5))
    while (frame.y_max - frame.y_min) / step > 8:
        step *= 2
    first = math.ceil(frame.y_min / step) * step
    n = int((frame.y_max - first) // step) + 1
    return [first + i * step for i in range(n)]


def _x_ticks(frame: ChartFrame) -> list[date]:
    y0 = date.fromordinal(frame.x_min).year
    y1 = date.fromordinal(frame.x_max).year
    step = max(1, math.ceil((y1 - y0 + 1) / 10))
    ticks = [date(y, 1, 1) for y in range(y0, y1 + 2, step)]
    return [d for d in ticks if frame.x_min <= d.toordinal() <= frame.x_max] or [date.fromordinal(frame.x_min)]


def _fmt(v: float) -> str:
    return f"{v:.{COORD_DIGITS}f}"


def _money_label(v: float) -> str:
    if v >= 1e9:
        return f"${v / 1e9:g}B"
    if v >= 1e6:
        return f"${v / 1e6:g}M"
    if v >= 1e3:
        return f"${v / 1e3:g}K"
    return f"${v:g}"


def render_svg(series: Mapping[str, Sequence[tuple[date, float]]], title: str = "Cumulative portfolio value",
               log_scale: bool = True) -> str:
    """One polyline per series plus axes and a legend; output is deterministic."""
    frame = chart_frame(series, log_scale)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:g}" y="28" text-anchor="middle" font-size="16">{escape(title)}</text>',
    ]
    x0, x1 = LEFT, WIDTH - RIGHT
    y0, y1 = TOP, HEIGHT - BOTTOM
    out.append(f'<g class="grid" stroke="#dddddd" stroke-width="1">')
    for v in _y_ticks(frame):
        py = _fmt(frame.y(v))
        out.append(f'<line x1="{x0}" y1="{py}" x2="{x1}" y2="{py}"/>')
    out.append("</g>")
    out.append('<g class="axis-labels" fill="#333333">')
    for v in _y_ticks(frame):
        out.append(f'<text x="{x0 - 8}" y="{_fmt(frame.y(v) + 4)}" text-anchor="end">{_money_label(v)}</text>')
    for d in _x_ticks(frame):
        out.append(f'<text x="{_fmt(frame.x(d))}" y="{y1 + 20}" text-anchor="middle">{d.year}</text>')
    scale = "log scale" if log_scale else "linear scale"
    out.append(f'<text x="20" y="{(y0 + y1) / 2:g}" transform="rotate(-90 20 {(y0 + y1) / 2:g})" '
               f'text-anchor="middle">Portfolio value ({scale})</text>')
    out.append("</g>")
    out.append(f'<rect class="plot-area" x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" '
               f'fill="none" stroke="#333333"/>')
    for i, (name, points) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_fmt(frame.x(d))},{_fmt(frame.y(v))}" for d, v in points)
        out.append(f'<polyline data-series="{escape(name)}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5" points="{coords}"/>')
    out.append('<g class="legend">')
    for i, name in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        ly = y0 + 10 + 20 * i
        out.append(f'<line x1="{x1 + 15}" y1="{ly}" x2="{x1 + 40}" y2="{ly}" stroke="{color}" stroke-width="3"/>')
        out.append(f'<text x="{x1 + 46}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
