"""Daily portfolio evolution, scheduled rebalancing and fee accounting."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from typing import Mapping, Optional

from .fees import FeeLedgerEntry, FeeModel, trade_fee
from .market_data import CpiSeries, DataError, MarketUniverse, SecurityId, deflate, month_of
from .strategies import Rebalance, StrategySpec, target_weights

logger = logging.getLogger(__name__)

# Deltas no larger than this fraction of portfolio value are not traded.
# Keeps float noise from generating $1 trades when holdings already match.
DUST_TOLERANCE = 1e-9


class EngineError(Exception):
    pass


class MissingReturn(EngineError):
    pass


class ZeroTotalWeight(EngineError):
    pass


class MissingBar(DataError):
    pass


class FeesExceedValue(EngineError):
    def __init__(self, message: str, partial: Optional["BacktestResult"] = None):
        super().__init__(message)
        self.partial = partial


def index_return(weights: Mapping[SecurityId, float], returns: Mapping[SecurityId, float]) -> float:
    """Weighted average of security returns, weights taken as given (not normalised)."""
    if not weights:
        raise ZeroTotalWeight("no weights")
    total = 0.0
    acc = 0.0
    for sid, w in weights.items():
        if sid not in returns:
            raise MissingReturn(f"no return for {sid}")
        total += w
        acc += w * returns[sid]
    if total == 0:
        raise ZeroTotalWeight("weights sum to zero")
    return acc / total


@dataclass(frozen=True)
class PortfolioState:
    as_of: date
    positions: Mapping[SecurityId, float]
    cash: float = 0.0
    frozen: tuple[SecurityId, ...] = ()  # held names without a bar on as_of

    @property
    def total(self) -> float:
        return self.cash + sum(self.positions.values())


@dataclass(frozen=True)
class FeeTotals:
    admin: float
    spread: float
    admin_real: Optional[float]  # in reference-month dollars
    spread_real: Optional[float]

    @property
    def total(self) -> float:
        return self.admin + self.spread

    @property
    def total_real(self) -> Optional[float]:
        if self.admin_real is None:
            return None
        return self.admin_real + self.spread_real


@dataclass
class BacktestResult:
    strategy: StrategySpec
    initial: float
    daily_values: list[tuple[date, float]] = field(default_factory=list)
    trades: list[FeeLedgerEntry] = field(default_factory=list)
    selections: list[tuple[date, list[SecurityId]]] = field(default_factory=list)
    frozen: list[tuple[date, SecurityId]] = field(default_factory=list)
    fee_totals: Optional[FeeTotals] = None
    positions: Optional[list[tuple[date, dict[SecurityId, float]]]] = None  # end-of-day holdings

    @property
    def final_value(self) -> float:
        return self.daily_values[-1][1]


def evolve_day(p: PortfolioState, u: MarketUniverse, d: date) -> PortfolioState:
    """Grow every position by its total return on ``d``.

    A position whose security has no bar on ``d`` keeps its value and is
    listed in the returned state's ``frozen``.
    """
    if u.index_of(d) != u.index_of(p.as_of) + 1:
        raise EngineError(f"{d} does not follow {p.as_of} in the calendar")
    day = u.bars[d]
    positions = {}
    frozen = []
    for sid, value in p.positions.items():
        bar = day.get(sid)
        if bar is None:
            positions[sid] = value
            frozen.append(sid)
        else:
            positions[sid] = value * (1.0 + bar.ret_total)
    return PortfolioState(d, positions, p.cash, tuple(frozen))


def rebalance(
    p: PortfolioState,
    targets: Mapping[SecurityId, float],
    u: MarketUniverse,
    d: date,
    fm: FeeModel,
    cpi: Optional[CpiSeries],
) -> tuple[PortfolioState, list[FeeLedgerEntry]]:
    """Trade to ``targets`` at the close of ``d``, paying fees out of the portfolio.

    Target values are set from the pre-fee total; the fees are then taken
    pro rata from every resulting position so no cash is left over.
    """
    value = p.total
    weight_sum = sum(targets.values())
    if weight_sum <= 0:
        raise ZeroTotalWeight(f"target weights on {d} sum to {weight_sum}")
    day = u.bars[d]
    for sid in targets:
        if sid not in day:
            raise MissingBar(f"target {sid} has no bar on {d.isoformat()}")

    month = month_of(d)
    held: dict[SecurityId, float] = {}
    entries: list[FeeLedgerEntry] = []
    for sid in sorted(set(p.positions) | set(targets)):
        current = p.positions.get(sid, 0.0)
        target = value * targets.get(sid, 0.0) / weight_sum
        delta = target - current
        if target > 0 and abs(delta) <= DUST_TOLERANCE * value:
            held[sid] = current
            continue
        if delta == 0:
            continue
        bar = day.get(sid) or u.last_bar(sid, d)
        if bar is None:
            raise MissingBar(f"no price on or before {d.isoformat()} to trade {sid}")
        shares = abs(delta) / bar.close
        admin, spread = trade_fee(fm, shares, bar.close, month, cpi)
        entries.append(FeeLedgerEntry(d, sid, math.copysign(shares, delta), bar.close, admin, spread))
        if target > 0:
            held[sid] = target

    fees = sum(e.total for e in entries)
    if fees >= value:
        raise FeesExceedValue(f"fees {fees:.2f} would exhaust portfolio value {value:.2f} on {d}")
    scale = (value - fees) / sum(held.values())
    positions = {sid: v * scale for sid, v in held.items()}
    return PortfolioState(d, positions, 0.0, p.frozen), entries


def is_rebalance_day(prev: date, d: date, schedule: Rebalance) -> bool:
    if schedule is Rebalance.ANNUAL:
        return d.year != prev.year
    return (d.year, d.month) != (prev.year, prev.month)


def _fee_totals(trades: list[FeeLedgerEntry], fm: FeeModel, cpi: Optional[CpiSeries]) -> FeeTotals:
    admin = sum(t.admin_component for t in trades)
    spread = sum(t.spread_component for t in trades)
    if cpi is None:
        return FeeTotals(admin, spread, None, None)
    admin_real = spread_real = 0.0
    ref = fm.reference_month
    for t in trades:
        m = month_of(t.date)
        admin_real += deflate(t.admin_component, m, ref, cpi)
        spread_real += deflate(t.spread_component, m, ref, cpi)
    return FeeTotals(admin, spread, admin_real, spread_real)


def run_backtest(
    u: MarketUniverse,
    spec: StrategySpec,
    fm: FeeModel,
    cpi: Optional[CpiSeries],
    start: date,
    end: date,
    initial: float,
    keep_positions: bool = False,
) -> BacktestResult:
    """Invest ``initial`` at the close of ``start`` and follow ``spec`` through ``end``.

    With ``keep_positions`` the end-of-day holdings are kept on the result.
    """
    if initial <= 0:
        raise ValueError(f"initial capital must be positive, got {initial}")
    lo, hi = u.index_of(start), u.index_of(end)
    if hi < lo:
        raise ValueError(f"end {end} precedes start {start}")

    result = BacktestResult(strategy=spec, initial=initial, positions=[] if keep_positions else None)
    state = PortfolioState(start, {}, float(initial))
    prev = None
    try:
        for d in u.calendar[lo : hi + 1]:
            if prev is not None:
                state = evolve_day(state, u, d)
                result.frozen.extend((d, sid) for sid in state.frozen)
            if prev is None or is_rebalance_day(prev, d, spec.rebalance):
                weights, picks = target_weights(u, d, spec)
                if picks:
                    result.selections.append((d, picks))
                state, entries = rebalance(state, weights, u, d, fm, cpi)
                result.trades.extend(entries)
            result.daily_values.append((d, state.total))
            if keep_positions:
                result.positions.append((d, dict(state.positions)))
            prev = d
    except FeesExceedValue as exc:
        result.fee_totals = _fee_totals(result.trades, fm, cpi)
        exc.partial = result
        raise
    if result.frozen:
        logger.warning("%s: %d position-days held without a bar (value frozen)",
                       spec.label, len(result.frozen))
    result.fee_totals = _fee_totals(result.trades, fm, cpi)
    return result


# ---------------------------------------------------------------------------
# Serialisation
# ---------------------------------------------------------------------------


def format_money(x: float) -> str:
    return f"{x:.2f}"


def write_values_csv(result: BacktestResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "total_value"])
        for d, v in result.daily_values:
            w.writerow([d.isoformat(), format_money(v)])


def write_trades_csv(result: BacktestResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "security_id", "shares_delta", "price", "admin_fee", "spread_fee"])
        for t in result.trades:
            w.writerow([t.date.isoformat(), t.security, f"{t.shares_traded:.6f}", repr(t.price),
                        format_money(t.admin_component), format_money(t.spread_component)])


def write_selections_csv(result: BacktestResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "rank", "security_id"])
        for d, picks in result.selections:
            for rank, sid in enumerate(picks, 1):
                w.writerow([d.isoformat(), rank, sid])
