"""Eleven independently initialized LSTMs and threshold voting over their outputs."""

from __future__ import annotations

import csv
import io
import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import LabelTable, SequenceSet
from .nn import checkpoint
from .nn.adam import AdamState, adam_step
from .nn.cell import DropoutMasks, Workspace, backward_batch, bce_loss, forward_batch
from .nn.init import ENSEMBLE_SCHEMES, InitializerScheme, init_parameters
from .nn.params import HyperParams, LstmParameters

log = logging.getLogger(__name__)

ENSEMBLE_SIZE = 11
DEFAULT_THRESHOLD = 8
PREDICT_CHUNK = 4096
# Training arithmetic runs in single precision; parameters and Adam stay float64.
TRAIN_DTYPE = np.float32


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnsembleConfig:
    member_schemes: tuple[InitializerScheme, ...] = ENSEMBLE_SCHEMES
    threshold: int = DEFAULT_THRESHOLD
    min_confidence: float = 0.5
    base_seed: int = 0
    hyper: HyperParams = field(default_factory=HyperParams)

    def __post_init__(self):
        schemes = tuple(InitializerScheme.parse(s) for s in self.member_schemes)
        object.__setattr__(self, "member_schemes", schemes)
        if len(schemes) != ENSEMBLE_SIZE:
            raise ValueError(f"ensemble needs exactly {ENSEMBLE_SIZE} schemes, got {len(schemes)}")
        _check_vote_args(self.threshold, self.min_confidence)


def _check_vote_args(threshold: int, min_confidence: float) -> None:
    if not 1 <= threshold <= ENSEMBLE_SIZE:
        raise ValueError(f"threshold must be in [1, {ENSEMBLE_SIZE}], got {threshold}")
    if not 0.5 <= min_confidence < 1.0:
        raise ValueError(f"min_confidence must be in [0.5, 1), got {min_confidence}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainingLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False


@dataclass
class Member:
    """A trained network plus the input scaling it was trained with."""

    params: LstmParameters
    scheme: InitializerScheme
    seed: int
    member_index: int = 0
    input_mean: float = 0.0
    input_scale: float = 1.0
    seq_len: int = 240

    def scale(self, inputs: np.ndarray) -> np.ndarray:
        return (np.asarray(inputs, dtype=np.float64) - self.input_mean) / self.input_scale

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        """Confidences for an ``(N, seq_len)`` array of raw return windows, dropout off."""
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[1] != self.seq_len:
            raise ValueError(f"member {self.member_index} expects sequences of length {self.seq_len}, "
                             f"got shape {inputs.shape}")
        out = np.empty(inputs.shape[0])
        for a in range(0, inputs.shape[0], PREDICT_CHUNK):
            out[a:a + PREDICT_CHUNK] = forward_batch(self.params, self.scale(inputs[a:a + PREDICT_CHUNK]))[0]
        return out

    def to_checkpoint(self, **meta) -> checkpoint.Checkpoint:
        meta = {"member_index": self.member_index, "input_mean": self.input_mean,
                "input_scale": self.input_scale, "seq_len": self.seq_len, **meta}
        return checkpoint.Checkpoint(self.params, self.scheme.value, self.seed, meta)

    @classmethod
    def from_checkpoint(cls, ckpt: checkpoint.Checkpoint) -> "Member":
        meta = ckpt.meta
        try:
            return cls(ckpt.params, InitializerScheme.parse(ckpt.scheme), ckpt.seed,
                       int(meta["member_index"]), float(meta["input_mean"]),
                       float(meta["input_scale"]), int(meta["seq_len"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise checkpoint.CheckpointError(f"checkpoint metadata incomplete ({exc})") from None


def train_member(scheme, train: SequenceSet, val: SequenceSet, hyper: HyperParams,
                 seed: int, member_index: int = 0) -> tuple[Member, TrainingLog]:
    """Fit one network with Adam on mean BCE and early stopping on validation loss.

    Minibatches pool sequences across tickers and are reshuffled every epoch.
    Dropout masks are drawn per sequence. The best-validation weights are
    returned.
    """
    scheme = InitializerScheme.parse(scheme)
    if len(train) == 0 or len(val) == 0:
        raise TrainingError(f"member {member_index}: empty training or validation set")
    if train.seq_len != hyper.seq_len or val.seq_len != hyper.seq_len:
        raise TrainingError(f"member {member_index}: sequences of length {train.seq_len}/{val.seq_len}, "
                            f"expected {hyper.seq_len}")

    mean = float(train.inputs.mean())
    std = float(train.inputs.std())
    member = Member(init_parameters(scheme, hyper.hidden_units, 1, seed), scheme, seed,
                    member_index, mean, std if std > 0 else 1.0, hyper.seq_len)
    X = member.scale(train.inputs)[..., None]
    y = train.targets.astype(np.float64)
    Xv = member.scale(val.inputs)[..., None]
    yv = val.targets.astype(np.float64)

    shuffle_rng, dropout_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    params = member.params
    state = AdamState.for_params(params)
    m, n = params.m, params.n

    workspace = Workspace()

    def evaluate(p):
        pred, _ = forward_batch(p, Xv)
        return float(np.mean(bce_loss(pred, yv))), float(np.mean((pred >= 0.5) == (yv == 1)))

    train_log = TrainingLog()
    val_loss, val_acc = evaluate(params)
    pred0, _ = forward_batch(params, X, dtype=TRAIN_DTYPE, workspace=workspace)
    train_log.epochs.append(EpochRecord(0, float(np.mean(bce_loss(pred0, y))), val_loss, val_acc))
    best_loss, best_params, waited = val_loss, params, 0

    for epoch in range(1, hyper.max_epochs + 1):
        order = shuffle_rng.permutation(len(y))
        losses, weights = [], []
        for a in range(0, len(order), hyper.batch_size):
            idx = order[a:a + hyper.batch_size]
            masks = DropoutMasks.sample(dropout_rng, n, m, hyper.dropout, hyper.recurrent_dropout,
                                        batch=len(idx))
            pred, cache = forward_batch(params, X[idx], masks, dtype=TRAIN_DTYPE, workspace=workspace)
            loss = float(np.mean(bce_loss(pred, y[idx])))
            if not np.isfinite(loss):
                raise TrainingError(f"member {member_index} ({scheme.value}): non-finite loss at epoch {epoch}")
            grads = backward_batch(params, X[idx], y[idx], cache)
            try:
                params, state = adam_step(params, grads, state, hyper.learning_rate)
            except ValueError as exc:
                raise TrainingError(f"member {member_index} ({scheme.value}) epoch {epoch}: {exc}") from None
            losses.append(loss)
            weights.append(len(idx))
        val_loss, val_acc = evaluate(params)
        if not np.isfinite(val_loss):
            raise TrainingError(f"member {member_index} ({scheme.value}): non-finite validation loss at epoch {epoch}")
        train_log.epochs.append(EpochRecord(epoch, float(np.average(losses, weights=weights)), val_loss, val_acc))
        if val_loss < best_loss:
            best_loss, best_params, waited = val_loss, params, 0
            train_log.best_epoch = epoch
        else:
            waited += 1
            if waited > hyper.patience:
                train_log.stopped_early = True
                break

    member.params = best_params
    return member, train_log


def _train_job(args) -> tuple[Member, TrainingLog]:
    index, scheme, train, val, hyper, seed = args
    try:
        return train_member(scheme, train, val, hyper, seed, member_index=index)
    except Exception as exc:
        raise TrainingError(f"member {index} ({InitializerScheme.parse(scheme).value}) failed: {exc}") from exc


def train_ensemble(config: EnsembleConfig, train: SequenceSet, val: SequenceSet,
                   parallelism: int = 1) -> list[tuple[Member, TrainingLog]]:
    """Train all members; member ``i`` uses seed ``base_seed + i``.

    Members share nothing, so the result is the same for any ``parallelism``.
    """
    if parallelism < 1:
        raise ValueError(f"parallelism must be >= 1, got {parallelism}")
    jobs = [(i, s, train, val, config.hyper, config.base_seed + i)
            for i, s in enumerate(config.member_schemes)]
    if parallelism == 1:
        return [_train_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(parallelism, len(jobs))) as pool:
        return list(pool.map(_train_job, jobs))


@dataclass(frozen=True)
class MemberOutput:
    ticker: str
    target_date: date
    confidence: float
    member_index: int


@dataclass(frozen=True)
class EnsembleForecast:
    ticker: str
    target_date: date
    positive_votes: int
    buy: bool

    @property
    def decision(self) -> str:
        return "buy" if self.buy else "no-buy"


@dataclass(frozen=True)
class AccuracyRecord:
    member_index: int
    block_index: int
    test_accuracy: float


def predict_members(members: Sequence[Member], sequences: SequenceSet,
                    seq_len: int | None = None) -> list[MemberOutput]:
    """One confidence per (member, sequence), ordered by member then sequence."""
    expected = seq_len if seq_len is not None else (members[0].seq_len if members else sequences.seq_len)
    if sequences.seq_len != expected:
        raise ValueError(f"sequences have length {sequences.seq_len}, expected {expected}")
    out = []
    for member in members:
        conf = member.predict(sequences.inputs) if len(sequences) else np.empty(0)
        out.extend(MemberOutput(t, d, float(c), member.member_index)
                   for t, d, c in zip(sequences.tickers, sequences.target_dates, conf))
    return out


def count_votes(confidences, min_confidence: float = 0.5) -> int:
    floor = max(0.5, min_confidence)
    return int(np.count_nonzero(np.asarray(confidences, dtype=np.float64) >= floor))


def vote(confidences, threshold: int = DEFAULT_THRESHOLD, min_confidence: float = 0.5,
         ticker: str = "", target_date: date | None = None) -> EnsembleForecast:
    """Buy when at least ``threshold`` members are confident (>= the floor) of an above-median day."""
    confidences = np.asarray(confidences, dtype=np.float64)
    if confidences.shape != (ENSEMBLE_SIZE,):
        raise ValueError(f"vote needs exactly {ENSEMBLE_SIZE} confidences, got shape {confidences.shape}")
    _check_vote_args(threshold, min_confidence)
    votes = count_votes(confidences, min_confidence)
    return EnsembleForecast(ticker, target_date, votes, votes >= threshold)


def group_outputs(outputs: Iterable[MemberOutput]) -> dict[tuple[date, str], np.ndarray]:
    """Collect member confidences per (date, ticker) as an array indexed by member."""
    grouped: dict[tuple[date, str], dict[int, float]] = defaultdict(dict)
    for o in outputs:
        slot = grouped[(o.target_date, o.ticker)]
        if o.member_index in slot:
            raise ValueError(f"duplicate output from member {o.member_index} for {o.ticker} on {o.target_date}")
        slot[o.member_index] = o.confidence
    result = {}
    for key in sorted(grouped):
        slot = grouped[key]
        if sorted(slot) != list(range(ENSEMBLE_SIZE)):
            raise ValueError(f"{key[1]} on {key[0]}: expected outputs from members 0..{ENSEMBLE_SIZE - 1}, "
                             f"got {sorted(slot)}")
        result[key] = np.array([slot[i] for i in range(ENSEMBLE_SIZE)])
    return result


def vote_all(outputs: Iterable[MemberOutput] | Mapping, threshold: int = DEFAULT_THRESHOLD,
             min_confidence: float = 0.5) -> list[EnsembleForecast]:
    grouped = outputs if isinstance(outputs, Mapping) else group_outputs(outputs)
    return [vote(conf, threshold, min_confidence, ticker=t, target_date=d)
            for (d, t), conf in grouped.items()]


def _label_lookup(labels) -> Mapping[tuple[str, date], int]:
    if isinstance(labels, LabelTable):
        return {(t, d): int(labels.labels[i, k])
                for i, d in enumerate(labels.dates) for k, t in enumerate(labels.tickers)}
    return labels


def member_accuracy(outputs: Sequence[MemberOutput], labels, block_index: int) -> AccuracyRecord:
    """Share of one member's outputs whose side of 0.5 matches the true label."""
    if not outputs:
        raise ValueError("no outputs to score")
    members = {o.member_index for o in outputs}
    if len(members) != 1:
        raise ValueError(f"outputs mix members {sorted(members)}")
    lookup = _label_lookup(labels)
    hits = 0
    for o in outputs:
        try:
            label = lookup[(o.ticker, o.target_date)]
        except KeyError:
            raise ValueError(f"no label for {o.ticker} on {o.target_date}") from None
        hits += int((o.confidence >= 0.5) == (label == 1))
    return AccuracyRecord(members.pop(), block_index, hits / len(outputs))


# --- persisted tables -------------------------------------------------------

OUTPUTS_HEADER = ["block_start", "target_date", "ticker", "member_index", "confidence"]
ACCURACY_HEADER = ["block_start", "member_index", "scheme", "test_accuracy"]


def checkpoint_name(member_index: int, scheme: InitializerScheme, block_start: date) -> str:
    return f"member{member_index:02d}_{InitializerScheme.parse(scheme).value}_{block_start.isoformat()}.json"


def member_outputs_to_csv(rows: Iterable[tuple[date, MemberOutput]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(OUTPUTS_HEADER)
    for block_start, o in rows:
        w.writerow([block_start.isoformat(), o.target_date.isoformat(), o.ticker, o.member_index,
                    repr(o.confidence)])
    return buf.getvalue()


def read_member_outputs(path) -> list[tuple[date, MemberOutput]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != OUTPUTS_HEADER:
            raise ValueError(f"{path}: expected header {','.join(OUTPUTS_HEADER)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append((date.fromisoformat(row[0]), MemberOutput(
                    row[2], date.fromisoformat(row[1]), float(row[4]), int(row[3]))))
            except (ValueError, IndexError):
                raise ValueError(f"{path}: line {lineno}: malformed row {row!r}") from None
    return rows


def accuracy_to_csv(rows: Iterable[tuple[date, str, AccuracyRecord]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ACCURACY_HEADER)
    for block_start, scheme, rec in rows:
        w.writerow([block_start.isoformat(), rec.member_index, scheme, repr(rec.test_accuracy)])
    return buf.getvalue()


def save_member(path, member: Member, **meta) -> None:
    checkpoint.save(Path(path), member.to_checkpoint(**meta))


def load_member(path) -> Member:
    path = Path(path)
    try:
        return Member.from_checkpoint(checkpoint.load(path))
    except checkpoint.CheckpointError as exc:
        msg = str(exc)
        raise checkpoint.CheckpointError(msg if str(path) in msg else f"{path}: {msg}") from None
