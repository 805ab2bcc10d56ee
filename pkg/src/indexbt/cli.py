"""Command-line entry point: ``indexbt backtest|select|validate-data``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Optional

from . import analytics, report
from .fees import FeeModel
from .index_engine import (
    BacktestResult,
    EngineError,
    FeesExceedValue,
    run_backtest,
    write_selections_csv,
    write_trades_csv,
    write_values_csv,
)
from .market_data import (
    CPI_FILE,
    CpiSeries,
    DataError,
    MarketUniverse,
    load_cpi,
    load_universe,
    write_cpi,
    write_universe,
)
from .strategies import (
    InsufficientEligibleSecurities,
    Kind,
    StrategyError,
    StrategySpec,
    Zone,
    median_ratios,
)
from .synth import SynthSpec, generate, write_synthetic

log = logging.getLogger("indexbt")

DATA_ENV = "INDEXBT_DATA"

EXIT_OK = 0
EXIT_DATA = 2
EXIT_INFEASIBLE = 3

# Universe used when --seed is given without --data.
DEMO_SYNTH = dict(n_securities=100, n_years=4, dividend_yield=0.02, split_probability=0.0005,
                  churn_rate=0.1, missing_bar_probability=0.001)


@dataclass
class RunConfig:
    data_dir: Optional[Path]
    cpi_path: Optional[Path]
    strategies: list[StrategySpec]
    start: Optional[date] = None
    end: Optional[date] = None
    initial: float = 100_000.0
    fees: FeeModel = field(default_factory=FeeModel)
    output_dir: Path = Path("out")
    log_scale: bool = True
    risk_free: float = analytics.DEFAULT_RISK_FREE
    seed: Optional[int] = None


def parse_strategy(text: str, zone: str, weighting: str, k: int) -> StrategySpec:
    """``equ``, ``mkc``, ``maxmedian``, ``basket`` or ``basket:<zone>[:<weighting>]``."""
    parts = text.strip().upper().split(":")
    kind = Kind(parts[0])
    if kind is Kind.BASKET:
        z = Zone(parts[1]) if len(parts) > 1 else Zone(zone.upper())
        w = Kind(parts[2]) if len(parts) > 2 else Kind(weighting.upper())
        return StrategySpec(kind, basket_zone=z, basket_weighting=w, k=k)
    if len(parts) > 1:
        raise ValueError(f"strategy {text!r} takes no options")
    if kind is Kind.MAXMEDIAN:
        return StrategySpec(kind, k=k)
    return StrategySpec(kind)


def load_inputs(cfg: RunConfig) -> tuple[MarketUniverse, Optional[CpiSeries]]:
    if cfg.data_dir is None:
        if cfg.seed is None:
            raise DataError(f"no data: pass --data, set {DATA_ENV}, or use --seed for synthetic data")
        return generate(SynthSpec(seed=cfg.seed, **DEMO_SYNTH))
    u = load_universe(cfg.data_dir)
    cpi_path = cfg.cpi_path
    if cpi_path is None:
        base = cfg.data_dir if cfg.data_dir.is_dir() else cfg.data_dir.parent
        cpi_path = base / CPI_FILE
        if not cpi_path.exists():
            cpi_path = None
    cpi = load_cpi(cpi_path) if cpi_path is not None else None
    if cpi is None and cfg.fees.admin_fee_2016 > 0:
        raise DataError("a CPI file (--cpi) is required to deflate the admin fee")
    return u, cpi


def _first_day_of_year(u: MarketUniverse, year: int) -> date:
    days = u.trading_days(year)
    if not days:
        raise DataError(f"no trading days in {year}")
    return days[0]


def backtest_window(u: MarketUniverse, cfg: RunConfig) -> tuple[date, date]:
    start, end = cfg.start, cfg.end
    if start is None:
        start = u.calendar[0]
        if any(s.kind is Kind.MAXMEDIAN for s in cfg.strategies):
            start = _first_day_of_year(u, start.year + 1)
    if end is None:
        end = u.calendar[-1]
    if start >= end:
        raise ValueError(f"start {start} must precede end {end}")
    return start, end


def cmd_backtest(cfg: RunConfig) -> int:
    u, cpi = load_inputs(cfg)
    start, end = backtest_window(u, cfg)
    results: list[BacktestResult] = []
    for spec in cfg.strategies:
        log.info("running %s from %s to %s", spec.label, start, end)
        results.append(run_backtest(u, spec, cfg.fees, cpi, start, end, cfg.initial))

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    per_year = {}
    stats = {}
    for r in results:
        name = r.strategy.label
        stem = name.lower()
        write_values_csv(r, out / f"{stem}_values.csv")
        write_trades_csv(r, out / f"{stem}_trades.csv")
        if r.selections:
            write_selections_csv(r, out / f"{stem}_selections.csv")
        per_year[name] = analytics.annual_returns(r)
        try:
            stats[name] = analytics.summarize(per_year[name], cfg.risk_free)
        except analytics.DegenerateSeries:
            stats[name] = None
        analytics.write_annual_table(out / f"{stem}_annual.csv", {name: per_year[name]}, {name: stats[name]})
    analytics.write_annual_table(out / "annual_returns.csv", per_year, stats)
    report.write_final_values(out / "final_values.csv", results)
    report.write_fee_table(out / "fees.csv", results)
    (out / "summary.txt").write_text(report.summary_text(results, stats))
    series = {r.strategy.label: r.daily_values for r in results}
    (out / "cumulative.svg").write_text(report.render_svg(series, log_scale=cfg.log_scale))
    sys.stdout.write(report.summary_text(results, stats))
    return EXIT_OK


def cmd_select(cfg: RunConfig, year: int, k: int) -> int:
    """Print the MaxMedian picks for ``year`` from the prior year's data."""
    u, _ = load_inputs(cfg)
    days = u.trading_days(year)
    as_of = days[0] if days else (u.trading_days(year - 1) or (None,))[-1]
    if as_of is None:
        raise InsufficientEligibleSecurities(0, k, f"{year} (no data for {year - 1})")
    medians = median_ratios(u, as_of, year - 1)
    if len(medians) < k:
        raise InsufficientEligibleSecurities(len(medians), k, str(year))
    ranked = sorted(medians.items(), key=lambda kv: (-kv[1], kv[0]))
    picks = ranked[:k]
    print(f"# MaxMedian picks for {year} using {year - 1} daily ratios, constituents as of {as_of.isoformat()}")
    print("# equal medians are ordered by security_id ascending")
    if len(ranked) > k and ranked[k][1] == picks[-1][1]:
        tied = [sid for sid, m in ranked if m == picks[-1][1]]
        print(f"# tie at rank {k}: {' '.join(tied)} share median {picks[-1][1]!r}; "
              f"kept the first {sum(1 for sid, _ in picks if sid in tied)} by id")
    print("rank,security_id,median_ratio")
    for rank, (sid, m) in enumerate(picks, 1):
        print(f"{rank},{sid},{m!r}")
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    """Load a dataset (or generate one from ``--seed``) and check it survives a CSV round trip."""
    if cfg.data_dir is None and cfg.seed is not None:
        target = cfg.output_dir
        write_synthetic(SynthSpec(seed=cfg.seed, **DEMO_SYNTH), target)
        cfg.data_dir = target
        print(f"wrote synthetic dataset (seed {cfg.seed}) to {target}")
    u, cpi = load_inputs(cfg)
    with tempfile.TemporaryDirectory() as tmp:
        write_universe(u, tmp)
        again = load_universe(tmp)
        if cpi is not None:
            write_cpi(cpi, Path(tmp) / CPI_FILE)
            if load_cpi(Path(tmp) / CPI_FILE) != cpi:
                raise DataError("CPI series changed after a CSV round trip")
    if again != u:
        raise DataError("universe changed after a CSV round trip")
    n_bars = sum(len(v) for v in u.bars.values())
    print(f"ok: {len(u.securities)} securities, {n_bars} bars, {len(u.calendar)} trading days "
          f"({u.calendar[0].isoformat()} to {u.calendar[-1].isoformat()})")
    if cpi is not None:
        (y0, m0), (y1, m1) = cpi.span
        print(f"ok: CPI {y0}-{m0:02d} to {y1}-{m1:02d}")
    return EXIT_OK


def _date(text: str) -> date:
    return date.fromisoformat(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="indexbt", description="Equal-weight, cap-weight and MaxMedian backtests.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", type=Path, default=os.environ.get(DATA_ENV),
                        help=f"prices CSV or dataset directory (default ${DATA_ENV})")
    common.add_argument("--cpi", type=Path, help="monthly CPI CSV (default <data>/cpi.csv)")
    common.add_argument("--seed", type=int, help="use a generated synthetic dataset")
    common.add_argument("--out", type=Path, default=Path("out"))
    common.add_argument("--k", type=int, default=20)
    common.add_argument("--admin-fee", type=float, default=1.0, help="per-trade fee in reference-month dollars")
    common.add_argument("--spread-bps", type=float, default=10.0, help="full bid-ask spread in basis points")

    b = sub.add_parser("backtest", parents=[common], help="run strategies and write reports")
    b.add_argument("--strategy", action="append", default=None,
                   help="equ | mkc | maxmedian | basket[:zone[:weighting]] (repeatable)")
    b.add_argument("--zone", default="top", choices=["top", "middle", "bottom"])
    b.add_argument("--basket-weighting", default="equ", choices=["equ", "mkc"])
    b.add_argument("--start", type=_date)
    b.add_argument("--end", type=_date)
    b.add_argument("--initial", type=float, default=100_000.0)
    b.add_argument("--risk-free", type=float, default=analytics.DEFAULT_RISK_FREE, help="percent")
    b.add_argument("--linear", action="store_true", help="linear instead of log y-axis")

    s = sub.add_parser("select", parents=[common], help="print MaxMedian picks for a year")
    s.add_argument("--year", type=int, required=True)

    sub.add_parser("validate-data", parents=[common], help="check a dataset round-trips through CSV")
    return p


def config_from_args(args) -> RunConfig:
    fees = FeeModel(admin_fee_2016=args.admin_fee, spread_fraction=args.spread_bps / 10_000)
    strategies = []
    if args.command == "backtest":
        for text in args.strategy or ["equ", "mkc"]:
            strategies.append(parse_strategy(text, args.zone, args.basket_weighting, args.k))
    data = Path(args.data) if args.data else None
    return RunConfig(
        data_dir=data,
        cpi_path=args.cpi,
        strategies=strategies,
        start=getattr(args, "start", None),
        end=getattr(args, "end", None),
        initial=getattr(args, "initial", 100_000.0),
        fees=fees,
        output_dir=args.out,
        log_scale=not getattr(args, "linear", False),
        risk_free=getattr(args, "risk_free", analytics.DEFAULT_RISK_FREE),
        seed=args.seed,
    )


def _fail(code: int, exc: BaseException) -> int:
    msg = " ".join(str(exc).split())
    print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "backtest":
            return cmd_backtest(cfg)
        if args.command == "select":
            return cmd_select(cfg, args.year, args.k)
        return cmd_validate(cfg)
    except (StrategyError, EngineError) as exc:
        return _fail(EXIT_INFEASIBLE, exc)
    except (DataError, OSError, ValueError) as exc:
        return _fail(EXIT_DATA, exc)


if __name__ == "__main__":
    sys.exit(main())
