"""Calendar-year returns and their summary statistics (all in percent)."""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass
from datetime import date
from typing import Mapping, Sequence

DEFAULT_RISK_FREE = 1.75


class SpanTooShort(ValueError):
    pass


class DegenerateSeries(ValueError):
    pass


@dataclass(frozen=True)
class AnnualStats:
    per_year: Mapping[int, float]
    arithmetic: float
    geometric: float
    sd: float
    sharpe: float
    risk_free: float = DEFAULT_RISK_FREE


def annual_returns_from_values(values: Sequence[tuple[date, float]], initial: float) -> dict[int, float]:
    """Year-over-year growth of the last close in each calendar year.

    The first year is measured against ``initial``. A trailing partial year
    is reported as its year-to-date return.
    """
    if len(values) < 2:
        raise SpanTooShort("need at least two daily values")
    year_end: dict[int, float] = {}
    for d, v in values:
        year_end[d.year] = v
    out = {}
    base = initial
    for year, close in year_end.items():
        out[year] = (close / base - 1.0) * 100.0
        base = close
    return out


def annual_returns(result) -> dict[int, float]:
    return annual_returns_from_values(result.daily_values, result.initial)


def sharpe_ratio(mean: float, sd: float, risk_free: float = DEFAULT_RISK_FREE) -> float:
    """Excess arithmetic mean over SD, times 100 (inputs and output in percent)."""
    if sd <= 0:
        raise DegenerateSeries(f"standard deviation must be positive, got {sd}")
    return (mean - risk_free) / sd * 100.0


def geometric_mean(percents: Sequence[float]) -> float:
    if any(r <= -100 for r in percents):
        raise ValueError("annual returns must exceed -100%")
    log_growth = math.fsum(math.log1p(r / 100.0) for r in percents)
    return math.expm1(log_growth / len(percents)) * 100.0


def summarize(per_year: Mapping[int, float], risk_free: float = DEFAULT_RISK_FREE) -> AnnualStats:
    rets = list(per_year.values())
    if len(rets) < 2:
        raise DegenerateSeries(f"need at least two years, got {len(rets)}")
    sd = statistics.stdev(rets)
    if sd == 0:
        raise DegenerateSeries("annual returns have zero spread")
    mean = statistics.fmean(rets)
    return AnnualStats(
        per_year=dict(per_year),
        arithmetic=mean,
        geometric=geometric_mean(rets),
        sd=sd,
        sharpe=sharpe_ratio(mean, sd, risk_free),
        risk_free=risk_free,
    )


def write_annual_table(path, columns: Mapping[str, Mapping[int, float]],
                       stats: Mapping[str, AnnualStats | None]) -> None:
    """Year rows, one column per strategy, then the four summary rows.

    Strategies whose series is too short to summarise get blank footer cells.
    """
    names = list(columns)
    years = sorted({y for series in columns.values() for y in series})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", *names])
        for y in years:
            w.writerow([y, *(_pct(columns[n].get(y)) for n in names)])
        for label, attr in (("Arithmetic", "arithmetic"), ("Geometric", "geometric"),
                            ("SD", "sd"), ("Sharpe Ratio", "sharpe")):
            w.writerow([label, *(_pct(getattr(stats[n], attr)) if stats.get(n) else "" for n in names)])


def _pct(x) -> str:
    return "" if x is None else f"{x:.2f}"
