"""Reproducible synthetic universes and slow reference implementations.

Everything random comes from ``random.Random`` (MT19937) seeded with an
integer, and normals are drawn with Box-Muller from ``random()``, so a
given :class:`SynthSpec` yields the same universe on any platform.

:func:`naive_backtest` and :func:`naive_maxmedian` re-derive the engine's
results with straightforward loops over the raw bars and share no code with
``index_engine`` or ``strategies``. They exist to be compared against.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Optional

from .fees import FeeLedgerEntry, FeeModel
from .index_engine import BacktestResult, FeesExceedValue, FeeTotals, MissingBar
from .market_data import (
    CPI_FILE,
    CpiSeries,
    MarketUniverse,
    PriceBar,
    write_cpi,
    write_universe,
)
from .strategies import InsufficientEligibleSecurities, Kind, StrategySpec, UniverseTooSmall, Zone


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_securities: int = 30
    n_years: int = 3
    volatility: float = 0.015  # daily
    dividend_yield: float = 0.0  # annual, paid quarterly
    split_probability: float = 0.0  # per security-day, 2-for-1
    churn_rate: float = 0.0  # share of securities whose membership changes
    drift: float = 0.0003  # daily
    drift_step: float = 0.0  # > 0 plants a strict drift and cap ordering by id
    missing_bar_probability: float = 0.0
    return_tick: Optional[float] = None  # quantise daily capital returns
    start_year: int = 2000
    days_per_year: Optional[int] = None  # truncate each year to its first N weekdays
    inflation: float = 0.03  # annual, for the CPI series

    def __post_init__(self):
        if self.n_securities < 1 or self.n_years < 1:
            raise ValueError("need at least one security and one year")
        if self.days_per_year is not None and self.days_per_year < 1:
            raise ValueError("days_per_year must be positive")


def _weekdays(year: int, limit: Optional[int]) -> list[date]:
    d = date(year, 1, 1)
    out = []
    while d.year == year and (limit is None or len(out) < limit):
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return out


def _normal(rng: random.Random) -> float:
    u1 = 1.0 - rng.random()  # (0, 1]
    u2 = rng.random()
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def generate(spec: SynthSpec) -> tuple[MarketUniverse, CpiSeries]:
    rng = random.Random(spec.seed)
    calendar = [d for y in range(spec.start_year, spec.start_year + spec.n_years)
                for d in _weekdays(y, spec.days_per_year)]
    n_days = len(calendar)
    n = spec.n_securities
    width = max(3, len(str(n - 1)))

    bars: list[PriceBar] = []
    constituency = {}
    for i in range(n):
        sid = f"S{i:0{width}d}"
        if spec.drift_step > 0:
            mu = spec.drift + spec.drift_step * (n - 1 - i)
            close = 50.0
            shares = 1e6 * (n - i)
        else:
            mu = spec.drift
            close = 10.0 + 90.0 * rng.random()
            shares = float(int(1e6 * (1.0 + 99.0 * rng.random())))
        div_offset = rng.randrange(63)

        first, last = 0, n_days - 1
        intervals = [(calendar[0], None)]
        mode = rng.random()
        c = spec.churn_rate
        if n_days > 2 and mode < c / 3:
            first = rng.randrange(1, n_days)
            intervals = [(calendar[first], None)]
        elif n_days > 2 and mode < 2 * c / 3:
            last = rng.randrange(0, n_days - 1)
            intervals = [(calendar[0], calendar[last])]
        elif n_days > 3 and mode < c:
            a, b = sorted(rng.sample(range(n_days - 1), 2))
            intervals = [(calendar[0], calendar[a]), (calendar[b + 1], None)]
        constituency[sid] = intervals

        grow_c = grow_t = 1.0
        carried = False  # returns accumulated over days without a bar
        for t in range(n_days):
            z = _normal(rng)
            miss = rng.random()
            split = rng.random()
            if t < first or t > last:
                continue
            rc = max(mu + spec.volatility * z, -0.95)
            if spec.return_tick:
                rc = round(rc / spec.return_tick) * spec.return_tick
            q = 0.0
            if spec.dividend_yield > 0 and (t + div_offset) % 63 == 0:
                q = spec.dividend_yield / 4
            if t > first and miss < spec.missing_bar_probability:
                grow_c *= 1.0 + rc
                grow_t *= (1.0 + rc) * (1.0 + q)
                carried = True
                continue
            if carried:
                grow_c *= 1.0 + rc
                grow_t *= (1.0 + rc) * (1.0 + q)
                ret_c = grow_c - 1.0
                ret_t = max(grow_t - 1.0, ret_c)
                grow_c = grow_t = 1.0
                carried = False
            else:
                ret_c = rc
                ret_t = max((1.0 + rc) * (1.0 + q) - 1.0, rc) if q else rc
            close = close * (1.0 + ret_c)
            if split < spec.split_probability:
                close /= 2.0
                shares *= 2.0
            bars.append(PriceBar(sid, calendar[t], close, ret_t, ret_c, shares))

    end_year = max(spec.start_year + spec.n_years - 1, 2016)
    months = [(y, m) for y in range(spec.start_year - 1, end_year + 1) for m in range(1, 13)]
    level = 100.0
    cpi = {}
    for m in months:
        cpi[m] = level
        level *= 1.0 + spec.inflation / 12 + 0.001 * rng.random()
    return MarketUniverse.from_bars(bars, constituency), CpiSeries(cpi)


def write_synthetic(spec: SynthSpec, directory) -> tuple[MarketUniverse, CpiSeries]:
    u, cpi = generate(spec)
    directory = Path(directory)
    write_universe(u, directory)
    write_cpi(cpi, directory / CPI_FILE)
    return u, cpi


# ---------------------------------------------------------------------------
# Reference implementations
# ---------------------------------------------------------------------------


def _member(u: MarketUniverse, sid, d: date) -> bool:
    for lo, hi in u.constituency.get(sid, ()):
        if (lo is None or lo <= d) and (hi is None or d <= hi):
            return True
    return False


def _members_with_bars(u: MarketUniverse, d: date) -> list:
    return sorted(sid for sid in u.bars[d] if _member(u, sid, d))


def naive_maxmedian(u: MarketUniverse, selection_date: date, k: int = 20) -> list:
    year = selection_date.year - 1
    year_days = [d for d in sorted(u.bars) if d.year == year]
    if not year_days:
        raise InsufficientEligibleSecurities(0, k)
    scored = []
    for sid in _members_with_bars(u, selection_date):
        moves = [u.bars[d][sid].ret_capital for d in year_days if sid in u.bars[d]]
        if 10 * len(moves) < 9 * len(year_days):
            continue
        moves.sort()
        ratios = [1.0 + m for m in moves if m != 0]
        if not ratios:
            continue
        h = len(ratios) // 2
        med = ratios[h] if len(ratios) % 2 else (ratios[h - 1] + ratios[h]) / 2
        scored.append((-med, sid))
    if len(scored) < k:
        raise InsufficientEligibleSecurities(len(scored), k)
    scored.sort()
    return [sid for _, sid in scored[:k]]


def _naive_weights(u: MarketUniverse, d: date, spec: StrategySpec) -> tuple[dict, list]:
    day = u.bars[d]
    members = _members_with_bars(u, d)
    cap = {sid: day[sid].close * day[sid].shares_out for sid in members}
    if spec.kind is Kind.EQU:
        return {sid: 1.0 for sid in members}, []
    if spec.kind is Kind.MKC:
        return cap, []
    if spec.kind is Kind.MAXMEDIAN:
        picks = naive_maxmedian(u, d, spec.k)
        return {sid: 1.0 for sid in picks}, picks
    size, k = len(members), spec.k
    if size < 2 * k:
        raise UniverseTooSmall(f"{size} < {2 * k}")
    by_cap = [sid for _, sid in sorted((-cap[sid], sid) for sid in members)]
    if spec.basket_zone is Zone.TOP:
        picks = by_cap[:k]
    elif spec.basket_zone is Zone.BOTTOM:
        picks = by_cap[size - k:]
    else:
        lo = size // 2 - k // 2
        picks = by_cap[lo:lo + k]
    if spec.basket_weighting is Kind.MKC:
        return {sid: cap[sid] for sid in picks}, picks
    return {sid: 1.0 for sid in picks}, picks


def naive_backtest(u: MarketUniverse, spec: StrategySpec, fm: FeeModel, cpi: Optional[CpiSeries],
                   start: date, end: date, initial: float) -> BacktestResult:
    days = [d for d in sorted(u.bars) if start <= d <= end]
    result = BacktestResult(strategy=spec, initial=initial)
    holdings: dict = {}
    cash = float(initial)
    prev = None
    for d in days:
        if prev is not None:
            for sid in list(holdings):
                if sid in u.bars[d]:
                    holdings[sid] = holdings[sid] * (1.0 + u.bars[d][sid].ret_total)
                else:
                    result.frozen.append((d, sid))
        if spec.rebalance.value == "ANNUAL":
            due = prev is None or d.year != prev.year
        else:
            due = prev is None or d.year != prev.year or d.month != prev.month
        if due:
            weights, picks = _naive_weights(u, d, spec)
            if picks:
                result.selections.append((d, picks))
            total = cash + sum(holdings.values())
            wsum = sum(weights.values())
            new = {}
            paid = 0.0
            for sid in sorted(set(holdings) | set(weights)):
                want = total * weights.get(sid, 0.0) / wsum
                have = holdings.get(sid, 0.0)
                diff = want - have
                if want > 0 and abs(diff) <= 1e-9 * total:
                    new[sid] = have
                    continue
                if diff == 0:
                    continue
                price = None
                for back in sorted((x for x in u.bars if x <= d), reverse=True):
                    if sid in u.bars[back]:
                        price = u.bars[back][sid].close
                        break
                if price is None:
                    raise MissingBar(sid)
                admin = 0.0
                if fm.admin_fee_2016:
                    ref = fm.reference_month
                    admin = fm.admin_fee_2016 * cpi.values[(d.year, d.month)] / cpi.values[ref]
                spread = abs(diff) * fm.spread_fraction / 2
                paid += admin + spread
                result.trades.append(FeeLedgerEntry(d, sid, diff / price, price, admin, spread))
                if want > 0:
                    new[sid] = want
            if paid >= total:
                raise FeesExceedValue("fees exceed value", result)
            factor = (total - paid) / sum(new.values())
            holdings = {sid: v * factor for sid, v in new.items()}
            cash = 0.0
        result.daily_values.append((d, cash + sum(holdings.values())))
        prev = d
    admin = sum(t.admin_component for t in result.trades)
    spread = sum(t.spread_component for t in result.trades)
    result.fee_totals = FeeTotals(admin, spread, None, None)
    return result
