"""Prices to labeled sequences: ingestion, returns, median labels, windows, blocks."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

TRAIN_DAYS = 750
VAL_DAYS = 270
TEST_DAYS = 270
STEP_DAYS = 30
SEQ_LEN = 240

PRICE_HEADER = ("date", "ticker", "close")


class DataError(ValueError):
    pass


@dataclass
class PriceTable:
    dates: list[date]
    tickers: list[str]
    close: np.ndarray  # (n_dates, n_tickers)

    def __post_init__(self):
        self.close = np.asarray(self.close, dtype=np.float64)
        if self.close.shape != (len(self.dates), len(self.tickers)):
            raise DataError(f"close has shape {self.close.shape}, expected {(len(self.dates), len(self.tickers))}")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates must be strictly increasing")
        if not np.all(self.close > 0):
            raise DataError("prices must be positive")


@dataclass
class ReturnTable:
    dates: list[date]
    tickers: list[str]
    returns: np.ndarray  # (n_dates, n_tickers)

    def __len__(self) -> int:
        return len(self.dates)

    def ticker_index(self) -> dict[str, int]:
        return {t: k for k, t in enumerate(self.tickers)}

    def date_index(self) -> dict[date, int]:
        return {d: i for i, d in enumerate(self.dates)}


@dataclass
class LabelTable:
    dates: list[date]
    tickers: list[str]
    labels: np.ndarray  # (n_dates, n_tickers), 0/1
    median: np.ndarray  # (n_dates,)


@dataclass(frozen=True)
class SequenceSample:
    ticker: str
    input: np.ndarray
    target: int
    target_date: date


@dataclass
class SequenceSet:
    """Array-backed collection of :class:`SequenceSample`, ordered by ticker then date."""

    inputs: np.ndarray        # (N, seq_len)
    targets: np.ndarray       # (N,)
    tickers: list[str]
    target_dates: list[date]
    target_index: np.ndarray  # (N,) row of the target day in the ReturnTable

    def __len__(self) -> int:
        return len(self.targets)

    def __getitem__(self, i: int) -> SequenceSample:
        return SequenceSample(self.tickers[i], self.inputs[i], int(self.targets[i]), self.target_dates[i])

    def __iter__(self) -> Iterator[SequenceSample]:
        return (self[i] for i in range(len(self)))

    @property
    def seq_len(self) -> int:
        return self.inputs.shape[1]

    @classmethod
    def empty(cls, seq_len: int) -> "SequenceSet":
        return cls(np.empty((0, seq_len)), np.empty(0, dtype=np.int8), [], [], np.empty(0, dtype=np.int64))


def _rows(source) -> Iterator[list[str]]:
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            yield from csv.reader(fh)
    else:
        yield from csv.reader(source)


def load_prices(source) -> PriceTable:
    """Read a ``date,ticker,close`` CSV (path or text stream) into a rectangular table.

    Dates on which any ticker lacks a price are dropped with a warning.
    """
    rows = _rows(source)
    header = next(rows, None)
    if header is None or tuple(h.strip().lower() for h in header) != PRICE_HEADER:
        raise DataError(f"line 1: expected header 'date,ticker,close', got {header!r}")
    cells: dict[tuple[date, str], float] = {}
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise DataError(f"line {lineno}: expected 3 fields, got {len(row)}")
        raw_date, ticker, raw_close = (c.strip() for c in row)
        try:
            day = date.fromisoformat(raw_date)
        except ValueError:
            raise DataError(f"line {lineno}: bad date {raw_date!r}") from None
        try:
            close = float(raw_close)
        except ValueError:
            raise DataError(f"line {lineno}: bad price {raw_close!r}") from None
        if not ticker:
            raise DataError(f"line {lineno}: empty ticker")
        if not np.isfinite(close) or close <= 0:
            raise DataError(f"line {lineno}: price must be positive, got {raw_close!r}")
        if (day, ticker) in cells:
            raise DataError(f"line {lineno}: duplicate row for {ticker} on {day}")
        cells[(day, ticker)] = close

    dates = sorted({d for d, _ in cells})
    tickers = sorted({t for _, t in cells})
    complete = [d for d in dates if all((d, t) in cells for t in tickers)]
    kept = set(complete)
    dropped = [d for d in dates if d not in kept]
    if dropped:
        listed = ", ".join(d.isoformat() for d in dropped)
        warnings.warn(f"dropped {len(dropped)} date(s) with missing prices: {listed}", stacklevel=2)
    close = np.array([[cells[(d, t)] for t in tickers] for d in complete], dtype=np.float64)
    return PriceTable(complete, tickers, close.reshape(len(complete), len(tickers)))


def prices_to_csv(table: PriceTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PRICE_HEADER)
    for i, d in enumerate(table.dates):
        for k, t in enumerate(table.tickers):
            w.writerow([d.isoformat(), t, repr(float(table.close[i, k]))])
    return buf.getvalue()


def write_prices(path, table: PriceTable) -> None:
    Path(path).write_text(prices_to_csv(table), encoding="utf-8")


def compute_returns(prices: PriceTable) -> ReturnTable:
    """Simple daily returns ``p_t / p_{t-1} - 1``; the first date is consumed."""
    if len(prices.dates) < 2:
        raise DataError(f"need at least 2 dates to compute returns, got {len(prices.dates)}")
    r = prices.close[1:] / prices.close[:-1] - 1.0
    return ReturnTable(list(prices.dates[1:]), list(prices.tickers), r)


def label_by_median(returns: ReturnTable) -> LabelTable:
    """Label 1 where a stock's return is strictly above that day's cross-sectional median."""
    if returns.returns.shape[1] < 1:
        raise DataError("need at least one ticker per date")
    med = np.median(returns.returns, axis=1)
    labels = (returns.returns > med[:, None]).astype(np.int8)
    return LabelTable(list(returns.dates), list(returns.tickers), labels, med)


def build_sequences(returns: ReturnTable, labels: LabelTable, seq_len: int = SEQ_LEN,
                    start: int = 0, stop: int | None = None) -> SequenceSet:
    """Sliding windows (stride 1) inside the day range ``[start, stop)``.

    Each sample's input covers days ``t - seq_len + 1 .. t`` and its target is
    the label of day ``t + 1``; both lie inside the range, giving
    ``stop - start - seq_len`` samples per ticker.
    """
    if seq_len < 1:
        raise DataError(f"seq_len must be >= 1, got {seq_len}")
    if returns.dates != labels.dates or returns.tickers != labels.tickers:
        raise DataError("returns and labels are not aligned")
    stop = len(returns) if stop is None else stop
    if not 0 <= start <= stop <= len(returns):
        raise DataError(f"day range [{start}, {stop}) outside table of {len(returns)} days")
    per_ticker = stop - start - seq_len
    if per_ticker <= 0:
        warnings.warn(f"range of {stop - start} days is too short for sequences of length {seq_len}",
                      stacklevel=2)
        return SequenceSet.empty(seq_len)

    order = sorted(range(len(returns.tickers)), key=lambda k: returns.tickers[k])
    block = returns.returns[start:stop - 1]
    target_idx = np.arange(start + seq_len, stop)
    inputs, targets, tickers, dates = [], [], [], []
    for k in order:
        inputs.append(sliding_window_view(block[:, k], seq_len))
        targets.append(labels.labels[target_idx, k])
        tickers.extend([returns.tickers[k]] * per_ticker)
        dates.extend(returns.dates[i] for i in target_idx)
    return SequenceSet(np.concatenate(inputs), np.concatenate(targets).astype(np.int8),
                       tickers, dates, np.tile(target_idx, len(order)))


@dataclass(frozen=True)
class Block:
    index: int
    start: int
    train: range
    val: range
    test: range
    prediction_days: range


@dataclass(frozen=True)
class BlockSchedule:
    blocks: tuple[Block, ...]
    train: int
    val: int
    test: int
    step: int

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self) -> Iterator[Block]:
        return iter(self.blocks)

    def __getitem__(self, i: int) -> Block:
        return self.blocks[i]

    @property
    def prediction_days(self) -> list[int]:
        return [d for b in self.blocks for d in b.prediction_days]


def build_block_schedule(n_days: int, train: int = TRAIN_DAYS, val: int = VAL_DAYS,
                         test: int = TEST_DAYS, step: int = STEP_DAYS) -> BlockSchedule:
    """Walk-forward blocks advancing ``step`` days.

    ``n_days`` counts return days. Each block predicts the last ``step``
    days of its test range, so successive blocks tile the prediction span.
    """
    for name, v in (("train", train), ("val", val), ("test", test), ("step", step)):
        if v < 1:
            raise DataError(f"{name} length must be >= 1, got {v}")
    if step > test:
        raise DataError(f"step ({step}) cannot exceed the test length ({test})")
    total = train + val + test
    if n_days < total:
        raise DataError(f"need at least {total} days for one block ({train}+{val}+{test}), got {n_days}")
    blocks = []
    for idx, a in enumerate(range(0, n_days - total + 1, step)):
        end = a + total
        blocks.append(Block(idx, a, range(a, a + train), range(a + train, a + train + val),
                            range(a + train + val, end), range(end - step, end)))
    return BlockSchedule(tuple(blocks), train, val, test, step)
