from datetime import date

import pytest

from indexbt.market_data import CpiSeries, MarketUniverse, PriceBar

_acceptance_lines = []


def pytest_runtest_logreport(report):
    # Acceptance tests tag themselves with record_property("criterion", n).
    props = dict(report.user_properties)
    if report.when != "call" or "criterion" not in props:
        return
    status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
    _acceptance_lines.append((props["criterion"], status, props.get("title", ""), props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, title, detail in sorted(_acceptance_lines):
        line = f"[{status}] criterion {number}: {title}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)


def months(first, last):
    y, m = first
    while (y, m) <= last:
        yield (y, m)
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)


@pytest.fixture(scope="session")
def cpi_1958_2016():
    """1958-01 .. 2016-12 with the 2016-12 / 1958-01 ratio fixed at 8.283776."""
    span = list(months((1958, 1), (2016, 12)))
    n = len(span) - 1
    values = {m: 100.0 * 8.283776 ** (i / n) for i, m in enumerate(span)}
    values[(1958, 1)] = 100.0
    values[(2016, 12)] = 828.3776
    return CpiSeries(values)


@pytest.fixture(scope="session")
def flat_cpi_2016():
    return CpiSeries({m: 240.0 for m in months((2015, 1), (2017, 12))})


def bar(sid, d, close=100.0, ret=0.0, shares=1000.0, ret_capital=None):
    return PriceBar(sid, d, close, ret, ret if ret_capital is None else ret_capital, shares)


def universe(rows, constituency=None):
    """rows: iterable of (sid, date, close, ret_total[, shares])."""
    bars = [bar(r[0], r[1], r[2], r[3], *(r[4:5] or [1000.0])) for r in rows]
    return MarketUniverse.from_bars(bars, constituency)


D = date
