"""Loading and querying CRSP-style daily security data and monthly CPI.

A universe lives in a directory holding ``prices.csv`` and, optionally,
``constituency.csv`` and ``cpi.csv``. A bare prices file is also accepted;
without a constituency file every security is treated as a permanent
index member.
"""

from __future__ import annotations

import bisect
import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

logger = logging.getLogger(__name__)

SecurityId = str
Month = tuple[int, int]
Interval = tuple[Optional[date], Optional[date]]

PRICE_COLUMNS = ("date", "security_id", "close", "ret_total", "ret_capital", "shares_out")
CONSTITUENCY_COLUMNS = ("security_id", "start_date", "end_date")
CPI_COLUMNS = ("year_month", "cpi")

PRICES_FILE = "prices.csv"
CONSTITUENCY_FILE = "constituency.csv"
CPI_FILE = "cpi.csv"

# Longest run of calendar days between trading dates before we warn.
MAX_CALENDAR_GAP_DAYS = 7


class DataError(Exception):
    """Base class for anything wrong with input market data."""


class MalformedRow(DataError):
    def __init__(self, path, line: int, reason: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {reason}")


class DuplicateBar(DataError):
    def __init__(self, security: SecurityId, day: date, first_line: Optional[int] = None,
                 second_line: Optional[int] = None):
        self.security = security
        self.date = day
        self.lines = (first_line, second_line)
        msg = f"duplicate bar for ({security}, {day.isoformat()})"
        if first_line is not None:
            msg += f" on lines {first_line} and {second_line}"
        super().__init__(msg)


class NonPositivePrice(DataError):
    pass


class InvalidReturn(DataError):
    pass


class OverlappingConstituency(DataError):
    pass


class DateNotInCalendar(DataError):
    pass


class MonthMissing(DataError):
    pass


@dataclass(frozen=True, slots=True)
class PriceBar:
    security: SecurityId
    date: date
    close: float
    ret_total: float
    ret_capital: float
    shares_out: float

    @property
    def market_value(self) -> float:
        return self.close * self.shares_out


def check_bar(bar: PriceBar) -> None:
    if not bar.security:
        raise DataError("empty security id")
    if not (bar.close > 0 and math.isfinite(bar.close)):
        raise NonPositivePrice(f"{bar.security} on {bar.date}: close {bar.close!r} is not positive")
    if not (bar.ret_total >= bar.ret_capital >= -1.0):
        raise InvalidReturn(
            f"{bar.security} on {bar.date}: need ret_total >= ret_capital >= -1, "
            f"got {bar.ret_total!r}, {bar.ret_capital!r}"
        )
    if not (bar.shares_out >= 0 and math.isfinite(bar.shares_out)):
        raise DataError(f"{bar.security} on {bar.date}: negative shares_out {bar.shares_out!r}")


def _covers(interval: Interval, day: date) -> bool:
    start, end = interval
    return (start is None or start <= day) and (end is None or day <= end)


@dataclass(frozen=True)
class MarketUniverse:
    """Validated daily bars, index membership intervals and trading calendar.

    Treat instances as immutable; the inner dicts are not copied on access.
    Build through :meth:`from_bars` or :func:`load_universe`, which enforce the
    invariants.
    """

    bars: Mapping[date, Mapping[SecurityId, PriceBar]]
    constituency: Mapping[SecurityId, tuple[Interval, ...]]
    calendar: tuple[date, ...]
    _history: Mapping[SecurityId, tuple[date, ...]] = field(repr=False, compare=False)
    _position: Mapping[date, int] = field(repr=False, compare=False)

    @classmethod
    def from_bars(
        cls,
        bars: Iterable[PriceBar],
        constituency: Optional[Mapping[SecurityId, Sequence[Interval]]] = None,
    ) -> "MarketUniverse":
        by_date: dict[date, dict[SecurityId, PriceBar]] = {}
        for bar in bars:
            check_bar(bar)
            day = by_date.setdefault(bar.date, {})
            if bar.security in day:
                raise DuplicateBar(bar.security, bar.date)
            day[bar.security] = bar
        return cls._assemble(by_date, constituency)

    @classmethod
    def _assemble(cls, by_date, constituency) -> "MarketUniverse":
        calendar = tuple(sorted(by_date))
        bars = {d: dict(sorted(by_date[d].items())) for d in calendar}
        history: dict[SecurityId, list[date]] = {}
        for d in calendar:
            for sid in bars[d]:
                history.setdefault(sid, []).append(d)

        if constituency is None:
            members = {sid: ((None, None),) for sid in sorted(history)}
        else:
            members = {}
            for sid in sorted(constituency):
                intervals = tuple(sorted(constituency[sid], key=_interval_key))
                _check_intervals(sid, intervals)
                members[sid] = intervals

        for prev, cur in zip(calendar, calendar[1:]):
            if (cur - prev).days > MAX_CALENDAR_GAP_DAYS:
                logger.warning("calendar gap of %d days between %s and %s", (cur - prev).days, prev, cur)

        return cls(
            bars=bars,
            constituency=members,
            calendar=calendar,
            _history={sid: tuple(ds) for sid, ds in sorted(history.items())},
            _position={d: i for i, d in enumerate(calendar)},
        )

    @property
    def securities(self) -> list[SecurityId]:
        return sorted(self._history)

    def index_of(self, day: date) -> int:
        try:
            return self._position[day]
        except KeyError:
            raise DateNotInCalendar(f"{day.isoformat()} is not a trading date") from None

    def bar(self, sid: SecurityId, day: date) -> Optional[PriceBar]:
        return self.bars.get(day, {}).get(sid)

    def last_bar(self, sid: SecurityId, day: date) -> Optional[PriceBar]:
        """Most recent bar for ``sid`` on or before ``day``."""
        dates = self._history.get(sid, ())
        i = bisect.bisect_right(dates, day)
        if i == 0:
            return None
        return self.bars[dates[i - 1]][sid]

    def is_member(self, sid: SecurityId, day: date) -> bool:
        return any(_covers(iv, day) for iv in self.constituency.get(sid, ()))

    def trading_days(self, year: int) -> tuple[date, ...]:
        lo = bisect.bisect_left(self.calendar, date(year, 1, 1))
        hi = bisect.bisect_left(self.calendar, date(year + 1, 1, 1))
        return self.calendar[lo:hi]


def _interval_key(iv: Interval):
    return (iv[0] or date.min, iv[1] or date.max)


def _check_intervals(sid: SecurityId, intervals: Sequence[Interval]) -> None:
    for start, end in intervals:
        if start is not None and end is not None and end < start:
            raise OverlappingConstituency(f"{sid}: interval ends {end} before it starts {start}")
    for (_, end), (start, _) in zip(intervals, intervals[1:]):
        if end is None or start is None or start <= end:
            raise OverlappingConstituency(f"{sid}: constituency intervals overlap")


def constituents_at(u: MarketUniverse, d: date) -> list[SecurityId]:
    """Index members on ``d`` that also have a bar that day, sorted by id."""
    u.index_of(d)
    return [sid for sid in u.bars[d] if u.is_member(sid, d)]


# ---------------------------------------------------------------------------
# CPI
# ---------------------------------------------------------------------------


def _next_month(m: Month) -> Month:
    y, mo = m
    return (y + 1, 1) if mo == 12 else (y, mo + 1)


@dataclass(frozen=True)
class CpiSeries:
    values: Mapping[Month, float]

    def __post_init__(self):
        if not self.values:
            raise DataError("empty CPI series")
        months = sorted(self.values)
        for a, b in zip(months, months[1:]):
            if _next_month(a) != b:
                raise DataError(f"CPI series is not contiguous between {a} and {b}")
        for m in months:
            level = self.values[m]
            if not (level > 0 and math.isfinite(level)):
                raise DataError(f"CPI level for {m[0]}-{m[1]:02d} is not positive: {level!r}")
        object.__setattr__(self, "values", dict(zip(months, (self.values[m] for m in months))))

    def __getitem__(self, m: Month) -> float:
        try:
            return self.values[m]
        except KeyError:
            raise MonthMissing(f"no CPI level for {m[0]}-{m[1]:02d}") from None

    @property
    def span(self) -> tuple[Month, Month]:
        months = list(self.values)
        return months[0], months[-1]


def deflate(amount: float, from_month: Month, to_month: Month, cpi: CpiSeries) -> float:
    """Convert ``amount`` from ``from_month`` dollars into ``to_month`` dollars."""
    return amount * cpi[to_month] / cpi[from_month]


def month_of(d: date) -> Month:
    return (d.year, d.month)


# ---------------------------------------------------------------------------
# CSV loading
# ---------------------------------------------------------------------------


def _rows(path: Path, columns: Sequence[str]):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise MalformedRow(path, 1, "missing header")
        header = [h.strip() for h in header]
        missing = [c for c in columns if c not in header]
        if missing:
            raise MalformedRow(path, 1, f"header lacks columns {missing}")
        idx = [header.index(c) for c in columns]
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(path, line, f"expected {len(header)} fields, got {len(row)}")
            yield line, [row[i].strip() for i in idx]


def _parse_date(path, line, text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise MalformedRow(path, line, f"bad date {text!r}") from None


def _parse_float(path, line, name: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(path, line, f"bad {name} {text!r}") from None
    if not math.isfinite(value):
        raise MalformedRow(path, line, f"non-finite {name} {text!r}")
    return value


def read_prices(path: Path) -> dict[date, dict[SecurityId, PriceBar]]:
    by_date: dict[date, dict[SecurityId, PriceBar]] = {}
    seen: dict[tuple[SecurityId, date], int] = {}
    for line, (d, sid, close, rt, rc, shares) in _rows(path, PRICE_COLUMNS):
        if not sid:
            raise MalformedRow(path, line, "empty security_id")
        day = _parse_date(path, line, d)
        key = (sid, day)
        if key in seen:
            raise DuplicateBar(sid, day, seen[key], line)
        seen[key] = line
        bar = PriceBar(
            security=sid,
            date=day,
            close=_parse_float(path, line, "close", close),
            ret_total=_parse_float(path, line, "ret_total", rt),
            ret_capital=_parse_float(path, line, "ret_capital", rc),
            shares_out=_parse_float(path, line, "shares_out", shares),
        )
        try:
            check_bar(bar)
        except DataError as exc:
            raise type(exc)(f"{path}:{line}: {exc}") from None
        by_date.setdefault(day, {})[sid] = bar
    return by_date


def read_constituency(path: Path) -> dict[SecurityId, list[Interval]]:
    out: dict[SecurityId, list[Interval]] = {}
    for line, (sid, start, end) in _rows(path, CONSTITUENCY_COLUMNS):
        if not sid:
            raise MalformedRow(path, line, "empty security_id")
        lo = _parse_date(path, line, start) if start else None
        hi = _parse_date(path, line, end) if end else None
        out.setdefault(sid, []).append((lo, hi))
    return out


def load_cpi(path) -> CpiSeries:
    path = Path(path)
    values: dict[Month, float] = {}
    for line, (ym, level) in _rows(path, CPI_COLUMNS):
        try:
            y, m = ym.split("-")
            month = (int(y), int(m))
            if not 1 <= month[1] <= 12:
                raise ValueError
        except ValueError:
            raise MalformedRow(path, line, f"bad year_month {ym!r}") from None
        if month in values:
            raise MalformedRow(path, line, f"duplicate month {ym}")
        values[month] = _parse_float(path, line, "cpi", level)
    return CpiSeries(values)


def load_universe(path) -> MarketUniverse:
    """Load a universe from a prices CSV or a directory holding one."""
    path = Path(path)
    if path.is_dir():
        prices = path / PRICES_FILE
        members = path / CONSTITUENCY_FILE
    else:
        prices = path
        members = path.with_name(CONSTITUENCY_FILE)
    if not prices.exists():
        raise DataError(f"no prices file at {prices}")
    by_date = read_prices(prices)
    if not by_date:
        raise DataError(f"{prices} contains no bars")
    constituency = read_constituency(members) if members.exists() else None
    return MarketUniverse._assemble(by_date, constituency)


# ---------------------------------------------------------------------------
# CSV writing (lossless: floats via repr)
# ---------------------------------------------------------------------------


def write_universe(u: MarketUniverse, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / PRICES_FILE, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PRICE_COLUMNS)
        for d in u.calendar:
            for b in u.bars[d].values():
                w.writerow([d.isoformat(), b.security, repr(b.close), repr(b.ret_total),
                            repr(b.ret_capital), repr(b.shares_out)])
    with open(directory / CONSTITUENCY_FILE, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONSTITUENCY_COLUMNS)
        for sid, intervals in u.constituency.items():
            for lo, hi in intervals:
                w.writerow([sid, lo.isoformat() if lo else "", hi.isoformat() if hi else ""])


def write_cpi(cpi: CpiSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CPI_COLUMNS)
        for (y, m), level in cpi.values.items():
            w.writerow([f"{y:04d}-{m:02d}", repr(level)])
