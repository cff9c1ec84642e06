"""Walk-forward orchestration: per-block training, member outputs and backtests.

Everything here reads and writes plain files under one output directory;
``cli`` adds argument handling on top.

    checkpoints/member{ii}_{scheme}_{block start}.json
    accuracy.csv           test accuracy per block and member
    member_outputs.csv     every member's confidence on every prediction day
    ledger_{portfolio}.csv one ledger per portfolio
    report.json            overall/yearly stats and risk measures
    cumulative_returns.csv plot data
"""

from __future__ import annotations

import logging
import os
import tempfile
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import backtest as bt
from .data import (Block, BlockSchedule, LabelTable, ReturnTable, SequenceSet,
                   build_block_schedule, build_sequences, compute_returns, label_by_median,
                   load_prices)
from .ensemble import (EnsembleConfig, Member, MemberOutput, accuracy_to_csv, checkpoint_name,
                       group_outputs, load_member, member_accuracy, member_outputs_to_csv,
                       predict_members, read_member_outputs, train_ensemble, vote_all)
from .nn import checkpoint
from .nn.checkpoint import CheckpointError
from .nn.init import InitializerScheme

log = logging.getLogger(__name__)

PORTFOLIOS = ("lstm", "all_stock", "random")


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class MarketData:
    returns: ReturnTable
    labels: LabelTable


@dataclass(frozen=True)
class BlockData:
    block: Block
    start_date: date
    train: SequenceSet
    val: SequenceSet
    test: SequenceSet


def atomic_write(path: Path, text: str) -> None:
    """Write through a temporary sibling so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def load_market(prices_path) -> MarketData:
    returns = compute_returns(load_prices(prices_path))
    return MarketData(returns, label_by_median(returns))


def schedule_for(market: MarketData, train: int, val: int, test: int, step: int) -> BlockSchedule:
    return build_block_schedule(len(market.returns), train, val, test, step)


def split_block(market: MarketData, block: Block, seq_len: int) -> BlockData:
    r, lab = market.returns, market.labels
    return BlockData(
        block, r.dates[block.start],
        build_sequences(r, lab, seq_len, block.train.start, block.train.stop),
        build_sequences(r, lab, seq_len, block.val.start, block.val.stop),
        build_sequences(r, lab, seq_len, block.test.start, block.test.stop),
    )


def block_seed(seed: int, block_index: int) -> int:
    """Base seed for one block's members, decorrelated across run seeds and blocks."""
    return int(np.random.SeedSequence([seed, block_index]).generate_state(1)[0])


def checkpoint_paths(ckpt_dir: Path, start: date, schemes: Sequence[InitializerScheme]) -> list[Path]:
    return [Path(ckpt_dir) / checkpoint_name(i, s, start) for i, s in enumerate(schemes)]


def load_block_members(ckpt_dir: Path, data: BlockData, schemes: Sequence[InitializerScheme]) -> list[Member]:
    members = []
    for i, path in enumerate(checkpoint_paths(ckpt_dir, data.start_date, schemes)):
        if not path.exists():
            raise PipelineError(f"block {data.block.index} ({data.start_date}): missing checkpoint for "
                                f"member {i} ({schemes[i].value}): {path}")
        member = load_member(path)
        if member.member_index != i or member.scheme != schemes[i]:
            raise CheckpointError(f"{path}: holds member {member.member_index} ({member.scheme.value}), "
                                  f"expected member {i} ({schemes[i].value})")
        members.append(member)
    return members


def train_blocks(market: MarketData, schedule: BlockSchedule, ensemble: EnsembleConfig, seed: int,
                 ckpt_dir: Path, parallelism: int = 1,
                 progress: Callable[[str], None] | None = None) -> list[tuple[date, str, object]]:
    """Train every block lacking checkpoints; return accuracy rows for all blocks.

    A block counts as done when all of its member checkpoints exist; those are
    loaded (and so validated) instead of retrained.
    """
    say = progress or log.info
    schemes = ensemble.member_schemes
    rows = []
    for block in schedule:
        data = split_block(market, block, ensemble.hyper.seq_len)
        paths = checkpoint_paths(ckpt_dir, data.start_date, schemes)
        if all(p.exists() for p in paths):
            say(f"block {block.index} ({data.start_date}): checkpoints present, skipped")
            members = load_block_members(ckpt_dir, data, schemes)
        else:
            say(f"block {block.index} ({data.start_date}): training {len(schemes)} members")
            cfg = replace(ensemble, base_seed=block_seed(seed, block.index))
            trained = train_ensemble(cfg, data.train, data.val, parallelism)
            members = []
            for path, (member, tlog) in zip(paths, trained):
                meta = {"block_index": block.index, "block_start": data.start_date.isoformat(),
                        "best_epoch": tlog.best_epoch, "epochs_run": len(tlog.epochs) - 1,
                        "stopped_early": tlog.stopped_early}
                atomic_write(path, _checkpoint_text(member, meta))
                members.append(member)
        outputs = predict_members(members, data.test)
        for member in members:
            own = [o for o in outputs if o.member_index == member.member_index]
            rows.append((data.start_date, member.scheme.value,
                         member_accuracy(own, market.labels, block.index)))
    return rows


def _checkpoint_text(member: Member, meta: dict) -> str:
    return checkpoint.dumps(member.to_checkpoint(**meta))


def collect_outputs(market: MarketData, schedule: BlockSchedule, schemes: Sequence[InitializerScheme],
                    seq_len: int, ckpt_dir: Path) -> list[tuple[date, MemberOutput]]:
    """Every member's confidence for each of its block's prediction days."""
    rows = []
    for block in schedule:
        data = split_block(market, block, seq_len)
        members = load_block_members(ckpt_dir, data, schemes)
        rows.extend((data.start_date, o) for o in predict_members(members, data.test))
    return rows


def prediction_dates(market: MarketData, schedule: BlockSchedule) -> list[date]:
    return [market.returns.dates[i] for i in schedule.prediction_days]


def run_backtest(market: MarketData, outputs: Sequence[MemberOutput], days: Sequence[date],
                 threshold: int, min_confidence: float, seed: int,
                 risk_free: bt.RiskFreeSeries | None = None) -> tuple[list[bt.PortfolioLedger], dict]:
    forecasts = vote_all(outputs, threshold, min_confidence)
    ledgers = [bt.run_strategy(forecasts, market.returns, days, name="lstm"),
               bt.all_stock_baseline(market.returns, days),
               bt.random_baseline(market.returns, days, seed)]
    return ledgers, bt.build_report(ledgers, risk_free)


def write_backtest(out: Path, outputs: Sequence[tuple[date, MemberOutput]],
                   ledgers: Sequence[bt.PortfolioLedger], report: dict) -> None:
    out = Path(out)
    atomic_write(out / "member_outputs.csv", member_outputs_to_csv(outputs))
    for ledger in ledgers:
        atomic_write(out / f"ledger_{ledger.name}.csv", bt.ledger_to_csv(ledger))
    atomic_write(out / "report.json", bt.report_to_json(report))
    atomic_write(out / "cumulative_returns.csv", bt.cumulative_to_csv(ledgers))


def write_accuracy(out: Path, rows) -> None:
    atomic_write(Path(out) / "accuracy.csv", accuracy_to_csv(rows))


def load_outputs(out: Path) -> list[MemberOutput]:
    path = Path(out) / "member_outputs.csv"
    if not path.exists():
        raise PipelineError(f"{path} not found; run backtest first")
    return [o for _, o in read_member_outputs(path)]


def run_sweep(market: MarketData, outputs: Sequence[MemberOutput], days: Sequence[date],
              variable: str, values: Sequence, threshold: int, min_confidence: float) -> list[bt.SweepRow]:
    return bt.sweep(variable, values, group_outputs(outputs), market.returns, days,
                    threshold, min_confidence)
