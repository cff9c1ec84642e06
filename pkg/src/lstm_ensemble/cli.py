"""Command-line front end: ``synth``, ``train``, ``backtest`` and ``sweep``.

Exit codes: 0 success, 1 invalid configuration or input, 2 failure while working.
Every command finishes validating before it writes anything.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import backtest as bt
from . import pipeline as pl
from .config import OUT_ENV, ConfigError, RunConfig, load_config
from .data import prices_to_csv
from .synthetic import synth_generate, true_labels_to_csv

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Invalid(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _Invalid(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lstm-ensemble", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (("synth", "write a planted-signal price CSV and its true labels"),
                        ("train", "train the ensemble on every walk-forward block"),
                        ("backtest", "vote, build ledgers and write the report"),
                        ("sweep", "re-vote stored outputs across a threshold or confidence grid")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", type=Path, help="key = value configuration file")
        s.add_argument("--out", type=Path, help=f"output directory (overrides config and ${OUT_ENV})")
        s.add_argument("--seed", type=int,
                       help="generator seed" if name == "synth" else "run seed (member and random-baseline draws)")
        if name in ("backtest", "sweep"):
            s.add_argument("--threshold", type=int, help="members that must vote up, 1..11 (default 8)")
            s.add_argument("--min-confidence", type=float, dest="min_confidence",
                           help="confidence a member needs to vote up, in [0.5, 1) (default 0.5)")
        if name == "train":
            s.add_argument("--parallelism", type=int, help="worker processes for member training (default 1)")
        if name == "sweep":
            s.add_argument("--variable", required=True, help=f"one of: {', '.join(bt.SWEEP_VARIABLES)}")
    return p


def _config(args) -> RunConfig:
    flags = {k: getattr(args, k, None) for k in ("out", "seed", "threshold", "min_confidence", "parallelism")}
    if args.command == "synth" and flags["seed"] is not None:
        flags["synth_seed"] = flags.pop("seed")
    return load_config(args.config, **flags)


def _prepare(cfg: RunConfig):
    """Load prices and build the schedule, surfacing both as validation errors."""
    market = pl.load_market(cfg.prices_path)
    n = len(market.returns)
    if n < cfg.min_block_days:
        raise ConfigError(f"{cfg.prices_path}: {n} return days ({n + 1} prices); at least "
                          f"{cfg.min_block_days} return days are needed for one block "
                          f"({cfg.train_days}+{cfg.val_days}+{cfg.test_days})")
    schedule = pl.schedule_for(market, cfg.train_days, cfg.val_days, cfg.test_days, cfg.step_days)
    return market, schedule


def cmd_synth(cfg: RunConfig):
    def work():
        market = synth_generate(cfg.n_tickers, cfg.n_days, cfg.signal_strength, cfg.generator_seed,
                                cfg.ar_coef, cfg.volatility)
        out = cfg.out
        pl.atomic_write(cfg.prices_path, prices_to_csv(market.prices))
        pl.atomic_write(out / "true_labels.csv", true_labels_to_csv(market.true_labels))
        manifest = {"seed": cfg.generator_seed, "n_tickers": cfg.n_tickers, "n_days": cfg.n_days,
                    "signal_strength": cfg.signal_strength, "ar_coef": cfg.ar_coef,
                    "volatility": cfg.volatility, "start": market.prices.dates[0].isoformat()}
        pl.atomic_write(out / "synth_manifest.json", json.dumps(manifest, indent=2) + "\n")
        print(f"wrote {cfg.n_tickers * cfg.n_days} price rows to {cfg.prices_path}")
    return work


def cmd_train(cfg: RunConfig):
    market, schedule = _prepare(cfg)

    def work():
        rows = pl.train_blocks(market, schedule, cfg.ensemble, cfg.seed, cfg.out / "checkpoints",
                               cfg.parallelism, progress=print)
        pl.write_accuracy(cfg.out, rows)
        print(f"{len(schedule)} block(s); accuracy log at {cfg.out / 'accuracy.csv'}")
    return work


def cmd_backtest(cfg: RunConfig):
    market, schedule = _prepare(cfg)
    risk_free = bt.load_risk_free(cfg.risk_free) if cfg.risk_free else None
    days = pl.prediction_dates(market, schedule)
    if risk_free is not None:
        risk_free.daily(days)

    def work():
        outputs = pl.collect_outputs(market, schedule, cfg.schemes, cfg.seq_len, cfg.out / "checkpoints")
        ledgers, report = pl.run_backtest(market, [o for _, o in outputs], days, cfg.threshold,
                                          cfg.min_confidence, cfg.seed, risk_free)
        pl.write_backtest(cfg.out, outputs, ledgers, report)
        for name in pl.PORTFOLIOS:
            s = report[name]["overall"]
            print(f"{name:>9}: mean {s['mean']:+.4f}%  stdev {s['stdev']:.4f}%  over {s['n_days']} days")
    return work


def cmd_sweep(cfg: RunConfig, variable: str):
    if variable not in bt.SWEEP_VARIABLES:
        raise ConfigError(f"unknown sweep variable {variable!r}; valid: {', '.join(bt.SWEEP_VARIABLES)}")
    market, schedule = _prepare(cfg)
    days = pl.prediction_dates(market, schedule)
    grid = cfg.threshold_grid if variable == "threshold" else cfg.min_confidence_grid

    def work():
        outputs = pl.load_outputs(cfg.out)
        rows = pl.run_sweep(market, outputs, days, variable, grid, cfg.threshold, cfg.min_confidence)
        path = cfg.out / f"sweep_{variable}.csv"
        pl.atomic_write(path, bt.sweep_to_csv(rows))
        for r in rows:
            print(f"{variable}={r.value}: mean {r.mean_daily_return_percent:+.4f}%  "
                  f"holdings {r.mean_holdings_count:.2f}")
    return work


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _Invalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        cfg = _config(args)
        if args.command == "synth":
            work = cmd_synth(cfg)
        elif args.command == "train":
            work = cmd_train(cfg)
        elif args.command == "backtest":
            work = cmd_backtest(cfg)
        else:
            work = cmd_sweep(cfg, args.variable)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        work()
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
