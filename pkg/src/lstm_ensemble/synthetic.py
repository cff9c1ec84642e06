"""Planted-signal price generator for desk-scale experiments.

Each ticker's daily log-return is

    x[t, k] = volatility * (s * f[t, k] + (1 - s) * e[t, k])

where ``f`` is a unit-variance AR(1) factor ``f[t] = phi f[t-1] + sqrt(1 - phi^2) u[t]``
and ``e``, ``u`` are independent standard normals. With ``s = 1`` the
return *is* the factor, so yesterday's return predicts today's sign; with
``s = 0`` log-prices are a pure Gaussian random walk.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .data import LabelTable, PriceTable

DEFAULT_START = date(2010, 1, 4)


@dataclass
class SyntheticMarket:
    prices: PriceTable
    factor: np.ndarray       # (n_days, n_tickers); row 0 belongs to the seed price day
    true_labels: LabelTable  # factor above its cross-sectional median, return days only
    signal_strength: float
    ar_coef: float
    volatility: float
    seed: int


def business_days(start: date, count: int) -> list[date]:
    days, d = [], start
    while len(days) < count:
        if d.weekday() < 5:
            days.append(d)
        d += timedelta(days=1)
    return days


def synth_generate(n_tickers: int, n_days: int, signal_strength: float, seed: int,
                   ar_coef: float = 0.9, volatility: float = 0.015,
                   start: date = DEFAULT_START) -> SyntheticMarket:
    """Generate ``n_days`` weekday closes for ``n_tickers`` tickers starting at 100."""
    if n_tickers < 2:
        raise ValueError(f"need at least 2 tickers for a cross-sectional median, got {n_tickers}")
    if n_days < 2:
        raise ValueError(f"need at least 2 days, got {n_days}")
    if not 0.0 <= signal_strength <= 1.0:
        raise ValueError(f"signal_strength must be in [0, 1], got {signal_strength}")
    if not -1.0 < ar_coef < 1.0:
        raise ValueError(f"ar_coef must be in (-1, 1), got {ar_coef}")

    rng = np.random.default_rng(seed)
    innov = rng.standard_normal((n_days, n_tickers))
    noise = rng.standard_normal((n_days, n_tickers))
    factor = np.empty((n_days, n_tickers))
    factor[0] = innov[0]
    scale = np.sqrt(1.0 - ar_coef ** 2)
    for t in range(1, n_days):
        factor[t] = ar_coef * factor[t - 1] + scale * innov[t]

    log_ret = volatility * (signal_strength * factor + (1.0 - signal_strength) * noise)
    log_ret[0] = 0.0
    close = 100.0 * np.exp(np.cumsum(log_ret, axis=0))
    tickers = [f"S{k:02d}" for k in range(n_tickers)]
    dates = business_days(start, n_days)

    f = factor[1:]
    med = np.median(f, axis=1)
    truth = LabelTable(dates[1:], tickers, (f > med[:, None]).astype(np.int8), med)
    return SyntheticMarket(PriceTable(dates, tickers, close), factor, truth,
                           signal_strength, ar_coef, volatility, seed)


def true_labels_to_csv(labels: LabelTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", "ticker", "true_label"])
    for i, d in enumerate(labels.dates):
        for k, t in enumerate(labels.tickers):
            w.writerow([d.isoformat(), t, int(labels.labels[i, k])])
    return buf.getvalue()


def write_true_labels(path, labels: LabelTable) -> None:
    Path(path).write_text(true_labels_to_csv(labels), encoding="utf-8")
