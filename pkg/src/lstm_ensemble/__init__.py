"""Ensemble of small LSTMs ranking next-day returns, with a voting backtest."""

from .backtest import (PortfolioLedger, ReturnStats, RiskFreeSeries, all_stock_baseline,
                       annualized_volatility, cumulative_series, daily_stats, random_baseline,
                       risk_report, run_strategy, sharpe, sortino, sweep, yearly_stats)
from .data import (build_block_schedule, build_sequences, compute_returns, label_by_median,
                   load_prices)
from .ensemble import EnsembleConfig, EnsembleForecast, Member, train_ensemble, train_member, vote
from .nn import HyperParams, InitializerScheme, LstmParameters, param_count
from .synthetic import synth_generate

__version__ = "0.1.0"

__all__ = [
    "PortfolioLedger", "ReturnStats", "RiskFreeSeries", "all_stock_baseline",
    "annualized_volatility", "cumulative_series", "daily_stats", "random_baseline",
    "risk_report", "run_strategy", "sharpe", "sortino", "sweep", "yearly_stats",
    "build_block_schedule", "build_sequences", "compute_returns", "label_by_median",
    "load_prices", "EnsembleConfig", "EnsembleForecast", "Member", "train_ensemble",
    "train_member", "vote", "HyperParams", "InitializerScheme", "LstmParameters",
    "param_count", "synth_generate",
]
