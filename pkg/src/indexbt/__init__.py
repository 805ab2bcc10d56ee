"""Backtests of equal-weight, cap-weight, basket and MaxMedian portfolios
over CRSP-style daily data, with fee and CPI accounting."""

from .analytics import AnnualStats, annual_returns, summarize
from .fees import FeeLedgerEntry, FeeModel, trade_fee
from .index_engine import BacktestResult, PortfolioState, evolve_day, index_return, rebalance, run_backtest
from .market_data import CpiSeries, MarketUniverse, PriceBar, constituents_at, deflate, load_cpi, load_universe
from .strategies import (
    Kind,
    Rebalance,
    StrategySpec,
    Zone,
    basket_select,
    maxmedian_select,
    target_weights_equ,
    target_weights_mkc,
)

__version__ = "0.1.0"
