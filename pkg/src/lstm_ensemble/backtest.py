"""Equal-weight portfolio ledgers, baselines, return/risk statistics and sweeps.

Ledger returns are fractions (0.01 is one percent); every statistic is
reported in percent.
"""

from __future__ import annotations

import bisect
import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import ReturnTable
from .ensemble import ENSEMBLE_SIZE, EnsembleForecast, count_votes

TRADING_DAYS = 252
LEDGER_HEADER = ["date", "portfolio", "holdings_count", "holdings", "daily_return", "cumulative_return"]
SWEEP_HEADER = ["variable", "value", "mean_daily_return_percent", "mean_holdings_count"]
SWEEP_VARIABLES = ("threshold", "min_confidence")
RISK_FREE_HEADER = ["date", "annual_rate_percent"]


class BacktestError(ValueError):
    pass


@dataclass(frozen=True)
class LedgerDay:
    date: date
    holdings: tuple[str, ...]
    daily_return: float
    cumulative_return: float


@dataclass
class PortfolioLedger:
    name: str
    days: list[LedgerDay]

    def __len__(self) -> int:
        return len(self.days)

    @property
    def dates(self) -> list[date]:
        return [d.date for d in self.days]

    @property
    def returns(self) -> np.ndarray:
        return np.array([d.daily_return for d in self.days], dtype=np.float64)

    @property
    def cumulative(self) -> np.ndarray:
        return np.array([d.cumulative_return for d in self.days], dtype=np.float64)

    @property
    def holdings_counts(self) -> np.ndarray:
        return np.array([len(d.holdings) for d in self.days], dtype=np.int64)

    def holdings(self) -> dict[date, frozenset[str]]:
        return {d.date: frozenset(d.holdings) for d in self.days}


def _days_index(returns: ReturnTable, days: Iterable) -> list[int]:
    """Accept row indices or dates; return row indices in the given order."""
    lookup = returns.date_index()
    rows = []
    for d in days:
        if isinstance(d, date):
            if d not in lookup:
                raise BacktestError(f"no realized returns on {d}")
            rows.append(lookup[d])
        else:
            i = int(d)
            if not 0 <= i < len(returns):
                raise BacktestError(f"day index {i} outside return table of {len(returns)} days")
            rows.append(i)
    return rows


def build_ledger(name: str, returns: ReturnTable, rows: Sequence[int],
                 holdings: Sequence[Sequence[str]]) -> PortfolioLedger:
    """Equal-weight ledger; an empty day sits in cash and earns 0."""
    col = returns.ticker_index()
    days, growth = [], 1.0
    for row, held in zip(rows, holdings):
        held = tuple(sorted(held))
        if held:
            r = float(np.mean(returns.returns[row, [col[t] for t in held]]))
        else:
            r = 0.0
        growth *= 1.0 + r
        days.append(LedgerDay(returns.dates[row], held, r, growth - 1.0))
    return PortfolioLedger(name, days)


def run_strategy(forecasts: Iterable[EnsembleForecast], returns: ReturnTable,
                 days: Iterable | None = None, name: str = "lstm") -> PortfolioLedger:
    """Hold, each day, every ticker the ensemble voted to buy for that day.

    ``days`` (dates or row indices) fixes the ledger's span; by default it is
    the set of forecast dates.
    """
    col = returns.ticker_index()
    lookup = returns.date_index()
    buys: dict[date, list[str]] = defaultdict(list)
    seen: set[date] = set()
    for f in forecasts:
        if f.ticker not in col or f.target_date not in lookup:
            raise BacktestError(f"forecast for {f.ticker} on {f.target_date} has no realized return")
        seen.add(f.target_date)
        if f.buy:
            buys[f.target_date].append(f.ticker)
    rows = _days_index(returns, sorted(seen) if days is None else days)
    span = {returns.dates[r] for r in rows}
    stray = sorted(seen - span)
    if stray:
        raise BacktestError(f"forecast dated {stray[0]} falls outside the ledger days")
    return build_ledger(name, returns, rows, [buys.get(returns.dates[r], []) for r in rows])


def all_stock_baseline(returns: ReturnTable, days: Iterable, name: str = "all_stock") -> PortfolioLedger:
    rows = _days_index(returns, days)
    everyone = sorted(returns.tickers)
    return build_ledger(name, returns, rows, [everyone] * len(rows))


def random_baseline(returns: ReturnTable, days: Iterable, seed: int,
                    name: str = "random") -> PortfolioLedger:
    """Each day hold K tickers drawn without replacement, K uniform on 1..k.

    Tickers are sorted before drawing so the ledger does not depend on the
    column order of ``returns``.
    """
    rows = _days_index(returns, days)
    pool = sorted(returns.tickers)
    k = len(pool)
    rng = np.random.default_rng(seed)
    holdings = []
    for _ in rows:
        count = int(rng.integers(1, k + 1))
        picks = rng.choice(k, size=count, replace=False)
        holdings.append([pool[j] for j in picks])
    return build_ledger(name, returns, rows, holdings)


# --- statistics -------------------------------------------------------------

@dataclass(frozen=True)
class ReturnStats:
    n_days: int
    mean: float
    stdev: float | None  # None when fewer than 2 days
    min: float
    max: float


def _sample_stdev(x: np.ndarray) -> float:
    if np.ptp(x) == 0.0:
        return 0.0
    return float(np.std(x, ddof=1))


def _stats(percent: np.ndarray) -> ReturnStats:
    return ReturnStats(len(percent), float(np.mean(percent)),
                       _sample_stdev(percent) if len(percent) >= 2 else None,
                       float(np.min(percent)), float(np.max(percent)))


def daily_stats(ledger: PortfolioLedger) -> ReturnStats:
    if len(ledger) < 2:
        raise BacktestError(f"daily stats need at least 2 days, ledger has {len(ledger)}")
    return _stats(100.0 * ledger.returns)


def _by_year(ledger: PortfolioLedger) -> dict[int, np.ndarray]:
    groups: dict[int, list[float]] = defaultdict(list)
    for d in ledger.days:
        groups[d.date.year].append(d.daily_return)
    return {y: np.array(groups[y]) for y in sorted(groups)}


def yearly_stats(ledger: PortfolioLedger) -> dict[int, ReturnStats]:
    return {y: _stats(100.0 * r) for y, r in _by_year(ledger).items()}


def cumulative_series(ledger: PortfolioLedger) -> list[tuple[date, float]]:
    """Compounded growth ``prod(1 + r) - 1`` in percent, one value per day."""
    cum = np.cumprod(1.0 + ledger.returns) - 1.0
    return [(d, 100.0 * float(c)) for d, c in zip(ledger.dates, cum)]


def annualized_volatility(daily_returns) -> float:
    r = np.asarray(daily_returns, dtype=np.float64)
    if len(r) < 2:
        raise BacktestError(f"volatility needs at least 2 days, got {len(r)}")
    return 100.0 * _sample_stdev(r) * math.sqrt(TRADING_DAYS)


def _excess(daily_returns, risk_free) -> tuple[np.ndarray, np.ndarray]:
    r = np.asarray(daily_returns, dtype=np.float64)
    rf = np.broadcast_to(np.asarray(risk_free, dtype=np.float64), r.shape)
    return r, r - rf


def sharpe(daily_returns, risk_free=0.0) -> float:
    """Mean excess return over its sample stdev, annualized by sqrt(252)."""
    r, ex = _excess(daily_returns, risk_free)
    if len(r) < 2:
        raise BacktestError(f"sharpe needs at least 2 days, got {len(r)}")
    sd = _sample_stdev(ex)
    if sd == 0.0:
        raise BacktestError("undefined ratio: excess returns have zero deviation")
    return float(np.mean(ex)) / sd * math.sqrt(TRADING_DAYS)


def sortino(daily_returns, risk_free=0.0) -> float:
    """Mean excess return over the sample stdev of the strictly negative returns."""
    r, ex = _excess(daily_returns, risk_free)
    neg = r[r < 0.0]
    if len(neg) < 2:
        raise BacktestError(f"downside deviation undefined: {len(neg)} negative day(s), need 2")
    sd = _sample_stdev(neg)
    if sd == 0.0:
        raise BacktestError("downside deviation undefined: negative returns are all equal")
    return float(np.mean(ex)) / sd * math.sqrt(TRADING_DAYS)


# --- risk-free rates --------------------------------------------------------

@dataclass
class RiskFreeSeries:
    """Annualized rates in percent, forward-filled onto any requested date."""

    dates: list[date]
    annual_percent: np.ndarray

    def __post_init__(self):
        self.annual_percent = np.asarray(self.annual_percent, dtype=np.float64)
        if len(self.dates) != len(self.annual_percent):
            raise BacktestError("risk-free dates and rates differ in length")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise BacktestError("risk-free dates must be strictly increasing")

    @classmethod
    def zero(cls) -> "RiskFreeSeries":
        return cls([date.min], [0.0])

    def daily(self, dates: Sequence[date]) -> np.ndarray:
        """Daily rate (fraction) per date: annual percent / 100 / 252."""
        if not self.dates:
            raise BacktestError("risk-free series is empty")
        out = np.empty(len(dates))
        for j, d in enumerate(dates):
            i = _last_on_or_before(self.dates, d)
            if i < 0:
                raise BacktestError(f"no risk-free observation on or before {d}")
            out[j] = self.annual_percent[i] / 100.0 / TRADING_DAYS
        return out


def _last_on_or_before(dates: Sequence[date], d: date) -> int:
    return bisect.bisect_right(dates, d) - 1


def load_risk_free(path) -> RiskFreeSeries:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != RISK_FREE_HEADER:
            raise BacktestError(f"{path}: line 1: expected header {','.join(RISK_FREE_HEADER)}")
        obs = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                d, rate = date.fromisoformat(row[0].strip()), float(row[1])
            except (ValueError, IndexError):
                raise BacktestError(f"{path}: line {lineno}: malformed row {row!r}") from None
            if not math.isfinite(rate):
                raise BacktestError(f"{path}: line {lineno}: rate must be finite")
            obs[d] = rate
    keys = sorted(obs)
    return RiskFreeSeries(keys, [obs[k] for k in keys])


# --- risk report ------------------------------------------------------------

@dataclass(frozen=True)
class RiskRow:
    portfolio: str
    year: int
    annualized_volatility: float | None
    sharpe: float | None
    sortino: float | None


def _or_none(fn, *args):
    try:
        return fn(*args)
    except BacktestError:
        return None


def risk_report(ledger: PortfolioLedger, risk_free: RiskFreeSeries | None = None) -> list[RiskRow]:
    """Per calendar year; a measure is None where its deviation is undefined."""
    risk_free = risk_free or RiskFreeSeries.zero()
    rows = []
    by_year: dict[int, list[LedgerDay]] = defaultdict(list)
    for d in ledger.days:
        by_year[d.date.year].append(d)
    for year in sorted(by_year):
        days = by_year[year]
        r = np.array([d.daily_return for d in days])
        rf = risk_free.daily([d.date for d in days])
        rows.append(RiskRow(ledger.name, year, _or_none(annualized_volatility, r),
                            _or_none(sharpe, r, rf), _or_none(sortino, r, rf)))
    return rows


def build_report(ledgers: Sequence[PortfolioLedger], risk_free: RiskFreeSeries | None = None) -> dict:
    report = {}
    for ledger in ledgers:
        yearly = [{"year": y, **asdict(s)} for y, s in yearly_stats(ledger).items()]
        risk = [{k: v for k, v in asdict(row).items() if k != "portfolio"}
                for row in risk_report(ledger, risk_free)]
        report[ledger.name] = {"overall": asdict(daily_stats(ledger)), "yearly": yearly, "risk": risk}
    return report


def report_to_json(report: Mapping) -> str:
    return json.dumps(report, indent=2, sort_keys=False) + "\n"


# --- persistence ------------------------------------------------------------

def ledger_to_csv(ledger: PortfolioLedger) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LEDGER_HEADER)
    for d in ledger.days:
        w.writerow([d.date.isoformat(), ledger.name, len(d.holdings), ";".join(d.holdings),
                    repr(d.daily_return), repr(d.cumulative_return)])
    return buf.getvalue()


def read_ledger(path) -> PortfolioLedger:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != LEDGER_HEADER:
            raise BacktestError(f"{path}: expected header {','.join(LEDGER_HEADER)}")
        name, days = None, []
        for lineno, row in enumerate(reader, start=2):
            try:
                held = tuple(row[3].split(";")) if row[3] else ()
                if int(row[2]) != len(held):
                    raise ValueError
                days.append(LedgerDay(date.fromisoformat(row[0]), held, float(row[4]), float(row[5])))
            except (ValueError, IndexError):
                raise BacktestError(f"{path}: line {lineno}: malformed row {row!r}") from None
            name = row[1] if name is None else name
    return PortfolioLedger(name or Path(path).stem, days)


def cumulative_to_csv(ledgers: Sequence[PortfolioLedger]) -> str:
    """Side-by-side cumulative returns (percent) for plotting."""
    series = [cumulative_series(l) for l in ledgers]
    if any(l.dates != ledgers[0].dates for l in ledgers):
        raise BacktestError("ledgers cover different days")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date"] + [f"{l.name}_cumulative_percent" for l in ledgers])
    for j, d in enumerate(ledgers[0].dates if ledgers else []):
        w.writerow([d.isoformat()] + [repr(s[j][1]) for s in series])
    return buf.getvalue()


# --- sweeps -----------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    variable: str
    value: float
    mean_daily_return_percent: float
    mean_holdings_count: float
    ledger: PortfolioLedger


def forecasts_for(grouped: Mapping[tuple[date, str], np.ndarray], threshold: int,
                  min_confidence: float) -> list[EnsembleForecast]:
    """Re-vote stored member confidences; ``threshold`` may be 12 (never buy)."""
    if not 1 <= threshold <= ENSEMBLE_SIZE + 1:
        raise BacktestError(f"threshold must be in [1, {ENSEMBLE_SIZE + 1}], got {threshold}")
    out = []
    for (d, t), conf in grouped.items():
        votes = count_votes(conf, min_confidence)
        out.append(EnsembleForecast(t, d, votes, votes >= threshold))
    return out


def sweep(variable: str, values: Sequence, grouped: Mapping[tuple[date, str], np.ndarray],
          returns: ReturnTable, days: Iterable, threshold: int = 8,
          min_confidence: float = 0.5) -> list[SweepRow]:
    """Mean daily return as one voting variable moves while the other stays fixed."""
    if variable not in SWEEP_VARIABLES:
        raise BacktestError(f"unknown sweep variable {variable!r}; valid: {', '.join(SWEEP_VARIABLES)}")
    days = list(days)
    rows = []
    for v in sorted(values):
        if variable == "threshold":
            fc = forecasts_for(grouped, int(v), min_confidence)
        else:
            if not 0.5 <= float(v) < 1.0:
                raise BacktestError(f"min_confidence must be in [0.5, 1), got {v}")
            fc = forecasts_for(grouped, threshold, float(v))
        ledger = run_strategy(fc, returns, days)
        rows.append(SweepRow(variable, v, 100.0 * float(np.mean(ledger.returns)) if len(ledger) else 0.0,
                             float(np.mean(ledger.holdings_counts)) if len(ledger) else 0.0, ledger))
    return rows


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([r.variable, r.value, repr(r.mean_daily_return_percent), repr(r.mean_holdings_count)])
    return buf.getvalue()
