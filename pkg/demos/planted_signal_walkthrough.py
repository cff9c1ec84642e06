"""From synthetic prices to a backtest, on a reduced schedule that runs in under a minute.

The generator plants a persistent per-ticker factor in the returns, so the
ensemble has something to find. Walk-forward blocks are shortened here
(train 200, validation 90, test 90 days, sequences of 60) to keep the demo
quick; the CLI uses the full 750/270/270 schedule with 240-day sequences.

    python demos/planted_signal_walkthrough.py [signal_strength]
"""
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from lstm_ensemble import backtest as bt
from lstm_ensemble.data import compute_returns, label_by_median, prices_to_csv
from lstm_ensemble.ensemble import EnsembleConfig, group_outputs
from lstm_ensemble.nn import HyperParams
from lstm_ensemble.pipeline import (MarketData, collect_outputs, prediction_dates, run_backtest,
                                    schedule_for, train_blocks)
from lstm_ensemble.synthetic import synth_generate

signal = float(sys.argv[1]) if len(sys.argv) > 1 else 0.8
SEQ, TRAIN, VAL, TEST, STEP = 60, 200, 90, 90, 30

# ---- data ----------------------------------------------------------------
synth = synth_generate(n_tickers=8, n_days=441, signal_strength=signal, seed=3)
returns = compute_returns(synth.prices)
market = MarketData(returns, label_by_median(returns))
schedule = schedule_for(market, TRAIN, VAL, TEST, STEP)
print(f"{len(returns.tickers)} tickers, {len(returns)} return days, signal {signal}")
print(f"{len(schedule)} walk-forward blocks, {len(schedule.prediction_days)} prediction days")
print(f"first rows of prices.csv:\n{''.join(prices_to_csv(synth.prices).splitlines(True)[:3])}")

# ---- training --------------------------------------------------------------
hyper = replace(HyperParams(), seq_len=SEQ, max_epochs=40)
ensemble = EnsembleConfig(hyper=hyper)
ckpt = Path(tempfile.mkdtemp()) / "checkpoints"
ckpt.mkdir()
print(f"checkpoints go to {ckpt}")
acc = train_blocks(market, schedule, ensemble, seed=1, ckpt_dir=ckpt, progress=print)
per_block = {}
for start, _, rec in acc:
    per_block.setdefault(start, []).append(rec.test_accuracy)
for start, values in per_block.items():
    print(f"  block {start}: member test accuracy {min(values):.3f} .. {max(values):.3f}")

# ---- voting and backtest --------------------------------------------------
rows = collect_outputs(market, schedule, ensemble.member_schemes, SEQ, ckpt)
outputs = [o for _, o in rows]
days = prediction_dates(market, schedule)
ledgers, report = run_backtest(market, outputs, days, threshold=8, min_confidence=0.5, seed=1)
print("\nthreshold 8 of 11, daily returns in percent:")
for ledger in ledgers:
    s = bt.daily_stats(ledger)
    print(f"  {ledger.name:<9} mean {s.mean:+.4f}  stdev {s.stdev:.4f}  "
          f"cumulative {100 * ledger.cumulative[-1]:+.2f}%  avg holdings {np.mean(ledger.holdings_counts):.2f}")

# ---- how the vote threshold trades breadth for conviction ---------------------
print("\nthreshold sweep:")
grouped = group_outputs(outputs)
for row in bt.sweep("threshold", range(1, 12), grouped, returns, days):
    bar = "#" * int(round(4 * row.mean_holdings_count))
    print(f"  k={int(row.value):2d}  mean {row.mean_daily_return_percent:+.4f}%  holdings {bar}")
