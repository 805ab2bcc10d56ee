"""Target weights for the equal-weight, cap-weight, basket and MaxMedian rules.

Weights are unnormalised: the index engine divides by their sum.
"""

from __future__ import annotations

import enum
import statistics
from dataclasses import dataclass
from datetime import date
from fractions import Fraction
from typing import Optional

from .market_data import MarketUniverse, SecurityId, constituents_at


class StrategyError(Exception):
    """A strategy cannot produce targets for the requested date."""


class EmptyConstituency(StrategyError):
    pass


class UniverseTooSmall(StrategyError):
    pass


class InsufficientEligibleSecurities(StrategyError):
    def __init__(self, eligible: int, k: int, when: str = ""):
        self.eligible = eligible
        self.k = k
        where = f" for {when}" if when else ""
        super().__init__(f"only {eligible} eligible securities{where}, need {k}")


class Kind(str, enum.Enum):
    EQU = "EQU"
    MKC = "MKC"
    BASKET = "BASKET"
    MAXMEDIAN = "MAXMEDIAN"


class Zone(str, enum.Enum):
    TOP = "TOP"
    MIDDLE = "MIDDLE"
    BOTTOM = "BOTTOM"


class Rebalance(str, enum.Enum):
    MONTHLY = "MONTHLY"
    ANNUAL = "ANNUAL"


# Share of the prior year's trading days a stock needs bars on to be ranked.
MIN_HISTORY_FRACTION = Fraction(9, 10)


@dataclass(frozen=True)
class StrategySpec:
    kind: Kind
    basket_zone: Optional[Zone] = None
    basket_weighting: Optional[Kind] = None
    k: int = 20
    rebalance: Optional[Rebalance] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.kind is Kind.BASKET:
            zone = Zone(self.basket_zone or Zone.TOP)
            weighting = Kind(self.basket_weighting or Kind.EQU)
            if weighting not in (Kind.EQU, Kind.MKC):
                raise ValueError(f"basket weighting must be EQU or MKC, got {weighting.value}")
            object.__setattr__(self, "basket_zone", zone)
            object.__setattr__(self, "basket_weighting", weighting)
        elif self.basket_zone is not None or self.basket_weighting is not None:
            raise ValueError("basket_zone/basket_weighting only apply to BASKET")
        if self.rebalance is None:
            default = Rebalance.ANNUAL if self.kind is Kind.MAXMEDIAN else Rebalance.MONTHLY
            object.__setattr__(self, "rebalance", default)
        else:
            object.__setattr__(self, "rebalance", Rebalance(self.rebalance))
        if self.kind is Kind.MAXMEDIAN and self.rebalance is not Rebalance.ANNUAL:
            raise ValueError("MaxMedian holds for a year; rebalance must be ANNUAL")

    @property
    def label(self) -> str:
        if self.kind is Kind.BASKET:
            return f"BASKET-{self.basket_zone.value}{self.k}-{self.basket_weighting.value}"
        if self.kind is Kind.MAXMEDIAN and self.k != 20:
            return f"MAXMEDIAN{self.k}"
        return self.kind.value


def _constituents(u: MarketUniverse, d: date) -> list[SecurityId]:
    members = constituents_at(u, d)
    if not members:
        raise EmptyConstituency(f"no index constituents with bars on {d.isoformat()}")
    return members


def target_weights_equ(u: MarketUniverse, d: date) -> dict[SecurityId, float]:
    return {sid: 1.0 for sid in _constituents(u, d)}


def target_weights_mkc(u: MarketUniverse, d: date) -> dict[SecurityId, float]:
    day = u.bars[d]
    weights = {sid: day[sid].market_value for sid in _constituents(u, d)}
    if not any(w > 0 for w in weights.values()):
        raise EmptyConstituency(f"all constituents have zero market value on {d.isoformat()}")
    return weights


def basket_ranks(n: int, zone: Zone, k: int) -> range:
    """1-based market-value ranks making up a basket of ``k`` out of ``n``."""
    zone = Zone(zone)
    if n < 2 * k:
        raise UniverseTooSmall(f"{n} constituents cannot hold a {zone.value} basket of {k} (need {2 * k})")
    if zone is Zone.TOP:
        first = 1
    elif zone is Zone.MIDDLE:
        first = n // 2 - k // 2 + 1
    else:
        first = n - k + 1
    return range(first, first + k)


def basket_select(u: MarketUniverse, d: date, zone: Zone, k: int = 20) -> list[SecurityId]:
    day = u.bars[d]
    members = _constituents(u, d)
    ranked = sorted(members, key=lambda sid: (-day[sid].market_value, sid))
    ranks = basket_ranks(len(ranked), zone, k)
    return ranked[ranks.start - 1 : ranks.stop - 1]


# ---------------------------------------------------------------------------
# MaxMedian
# ---------------------------------------------------------------------------


def median_ratios(u: MarketUniverse, as_of: date, year: int) -> dict[SecurityId, float]:
    """Median daily price ratio over ``year`` for every stock eligible on ``as_of``.

    Ratios are rebuilt from capital returns so splits do not show up as
    price jumps. Ratios of exactly one are dropped before taking the median;
    stocks with no ratios left, or with bars on fewer than 90% of the year's
    trading days, are left out.
    """
    days = u.trading_days(year)
    if not days:
        return {}
    members = constituents_at(u, as_of)
    history: dict[SecurityId, list[float]] = {sid: [] for sid in members}
    counts = dict.fromkeys(members, 0)
    for d in days:
        day = u.bars[d]
        for sid in members:
            bar = day.get(sid)
            if bar is None:
                continue
            counts[sid] += 1
            if bar.ret_capital != 0:
                history[sid].append(1.0 + bar.ret_capital)
    n_days = len(days)
    out = {}
    for sid in members:
        if counts[sid] < MIN_HISTORY_FRACTION * n_days or not history[sid]:
            continue
        out[sid] = statistics.median(history[sid])
    return out


def maxmedian_rank(u: MarketUniverse, selection_date: date, k: int = 20,
                   year: Optional[int] = None) -> list[tuple[SecurityId, float]]:
    """The ``k`` largest-median stocks as ``(id, median)``, best first.

    ``year`` defaults to the calendar year before ``selection_date``. Equal
    medians are ordered by security id.
    """
    year = selection_date.year - 1 if year is None else year
    if not u.trading_days(year):
        raise InsufficientEligibleSecurities(0, k, f"{year} (no trading days)")
    medians = median_ratios(u, selection_date, year)
    if len(medians) < k:
        raise InsufficientEligibleSecurities(len(medians), k, str(year + 1))
    ranked = sorted(medians.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


def maxmedian_select(u: MarketUniverse, selection_date: date, k: int = 20) -> list[SecurityId]:
    return [sid for sid, _ in maxmedian_rank(u, selection_date, k)]


def target_weights(u: MarketUniverse, d: date, spec: StrategySpec) -> tuple[dict[SecurityId, float], list[SecurityId]]:
    """Weights for ``spec`` on ``d`` plus the selected names (empty for EQU/MKC)."""
    if spec.kind is Kind.EQU:
        return target_weights_equ(u, d), []
    if spec.kind is Kind.MKC:
        return target_weights_mkc(u, d), []
    if spec.kind is Kind.BASKET:
        picks = basket_select(u, d, spec.basket_zone, spec.k)
        if spec.basket_weighting is Kind.MKC:
            day = u.bars[d]
            return {sid: day[sid].market_value for sid in picks}, picks
        return {sid: 1.0 for sid in picks}, picks
    picks = maxmedian_select(u, d, spec.k)
    return {sid: 1.0 for sid in picks}, picks
