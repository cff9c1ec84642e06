"""Plain-text ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Every key has a default, so an
empty file is a valid configuration. Recognized keys:

    out                  output directory (default ``out``)
    prices               price CSV (default ``<out>/prices.csv``)
    risk_free            optional ``date,annual_rate_percent`` CSV; zero rate when unset
    seed                 training and random-baseline seed
    synth_seed           generator seed (defaults to ``seed``)
    n_tickers, n_days, signal_strength, ar_coef, volatility    synthetic generator
    hidden_units, learning_rate, dropout, recurrent_dropout,
    batch_size, max_epochs, patience, seq_len                  network training
    train_days, val_days, test_days, step_days                 walk-forward schedule
    schemes              comma-separated initializer names, one per member
    threshold, min_confidence                                  voting
    threshold_grid, min_confidence_grid                        comma-separated sweep grids
    parallelism          worker processes for member training

Relative paths resolve against the directory of the config file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Mapping

from .data import STEP_DAYS, TEST_DAYS, TRAIN_DAYS, VAL_DAYS
from .ensemble import DEFAULT_THRESHOLD, ENSEMBLE_SIZE, EnsembleConfig
from .nn.init import ENSEMBLE_SCHEMES, InitializerScheme
from .nn.params import HyperParams

OUT_ENV = "LSTM_ENSEMBLE_OUT"


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _schemes(text: str) -> tuple[InitializerScheme, ...]:
    return tuple(InitializerScheme.parse(v.strip()) for v in text.split(",") if v.strip())


def _path(text: str) -> Path | None:
    return Path(text) if text else None


@dataclass(frozen=True)
class RunConfig:
    out: Path = Path("out")
    prices: Path | None = None
    risk_free: Path | None = None
    seed: int = 0
    synth_seed: int | None = None

    n_tickers: int = 10
    n_days: int = 1320
    signal_strength: float = 0.8
    ar_coef: float = 0.9
    volatility: float = 0.015

    hidden_units: int = 3
    learning_rate: float = 0.0075
    dropout: float = 0.06
    recurrent_dropout: float = 0.14
    batch_size: int = 6800
    max_epochs: int = 100
    patience: int = 10
    seq_len: int = 240

    train_days: int = TRAIN_DAYS
    val_days: int = VAL_DAYS
    test_days: int = TEST_DAYS
    step_days: int = STEP_DAYS

    schemes: tuple[InitializerScheme, ...] = ENSEMBLE_SCHEMES
    threshold: int = DEFAULT_THRESHOLD
    min_confidence: float = 0.5
    threshold_grid: tuple[int, ...] = tuple(range(1, ENSEMBLE_SIZE + 1))
    min_confidence_grid: tuple[float, ...] = (0.5, 0.55, 0.6, 0.65, 0.7, 0.75)
    parallelism: int = 1

    def __post_init__(self):
        self.validate()

    # Derived objects double as validators: constructing them raises on bad values.
    @property
    def hyper(self) -> HyperParams:
        return HyperParams(self.hidden_units, self.learning_rate, self.dropout, self.recurrent_dropout,
                           self.batch_size, self.max_epochs, self.patience, self.seq_len)

    @property
    def ensemble(self) -> EnsembleConfig:
        return EnsembleConfig(self.schemes, self.threshold, self.min_confidence, 0, self.hyper)

    @property
    def prices_path(self) -> Path:
        return self.prices if self.prices is not None else self.out / "prices.csv"

    @property
    def generator_seed(self) -> int:
        return self.seed if self.synth_seed is None else self.synth_seed

    def validate(self) -> None:
        try:
            self.ensemble
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for name in ("train_days", "val_days", "test_days", "step_days", "parallelism"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.step_days > self.test_days:
            raise ConfigError(f"step_days ({self.step_days}) cannot exceed test_days ({self.test_days})")
        if self.test_days - self.seq_len != self.step_days:
            raise ConfigError(f"test_days - seq_len must equal step_days so predictions tile the span; "
                              f"got {self.test_days} - {self.seq_len} != {self.step_days}")
        for name in ("train_days", "val_days"):
            if getattr(self, name) <= self.seq_len:
                raise ConfigError(f"{name} ({getattr(self, name)}) must exceed seq_len ({self.seq_len})")
        if self.n_tickers < 2:
            raise ConfigError(f"n_tickers must be >= 2 for a cross-sectional median, got {self.n_tickers}")
        if self.n_days < 2:
            raise ConfigError(f"n_days must be >= 2, got {self.n_days}")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise ConfigError(f"signal_strength must be in [0, 1], got {self.signal_strength}")
        if not -1.0 < self.ar_coef < 1.0:
            raise ConfigError(f"ar_coef must be in (-1, 1), got {self.ar_coef}")
        if not self.volatility > 0:
            raise ConfigError(f"volatility must be > 0, got {self.volatility}")
        if not self.threshold_grid or any(not 1 <= k <= ENSEMBLE_SIZE + 1 for k in self.threshold_grid):
            raise ConfigError(f"threshold_grid values must be in [1, {ENSEMBLE_SIZE + 1}]")
        if not self.min_confidence_grid or any(not 0.5 <= c < 1.0 for c in self.min_confidence_grid):
            raise ConfigError("min_confidence_grid values must be in [0.5, 1)")

    @property
    def min_block_days(self) -> int:
        return self.train_days + self.val_days + self.test_days

    def with_overrides(self, **values) -> "RunConfig":
        values = {k: v for k, v in values.items() if v is not None}
        try:
            return replace(self, **values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


_PARSERS = {
    "out": Path, "prices": _path, "risk_free": _path, "synth_seed": int,
    "schemes": _schemes, "threshold_grid": _ints, "min_confidence_grid": _floats,
}
_KEYS = {f.name: f for f in fields(RunConfig)}


def _parser(name: str):
    if name in _PARSERS:
        return _PARSERS[name]
    default = _KEYS[name].default
    return type(default)


def parse_config(text: str, base_dir: Path | None = None, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into typed RunConfig keyword arguments."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{source}: line {lineno}: unknown key {key!r}; valid keys: {', '.join(_KEYS)}")
        if key in values:
            raise ConfigError(f"{source}: line {lineno}: duplicate key {key!r}")
        try:
            parsed = _parser(key)(value)
        except ValueError as exc:
            raise ConfigError(f"{source}: line {lineno}: bad value for {key}: {exc}") from None
        if isinstance(parsed, Path) and base_dir is not None and not parsed.is_absolute():
            parsed = base_dir / parsed
        values[key] = parsed
    return values


def load_config(path: Path | None = None, env: Mapping[str, str] | None = None,
                **flags) -> RunConfig:
    """Defaults, then the config file, then the output-directory variable, then flags."""
    values: dict = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        values.update(parse_config(text, path.parent, str(path)))
    env = os.environ if env is None else env
    if env.get(OUT_ENV):
        values["out"] = Path(env[OUT_ENV])
    values.update({k: v for k, v in flags.items() if v is not None})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def config_to_text(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        if isinstance(v, tuple):
            v = ",".join(s.value if isinstance(s, InitializerScheme) else repr(s) for s in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
