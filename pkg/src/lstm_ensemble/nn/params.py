"""Parameter containers for a single-layer LSTM with a sigmoid output unit."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

# Fixed block order used by gradients, optimizer state and checkpoints.
BLOCK_NAMES = (
    "w_forget", "w_input", "w_output", "w_candidate",
    "u_forget", "u_input", "u_output", "u_candidate",
    "b_forget", "b_input", "b_output", "b_candidate",
    "w_out", "b_out",
)
LSTM_BLOCKS = BLOCK_NAMES[:12]


def param_count(m: int, n: int) -> int:
    """Number of trainable LSTM-layer parameters, ``4mn + 4m^2 + 4m``.

    The output unit adds ``m + 1`` more; see :func:`total_param_count`.
    """
    if m < 1 or n < 1:
        raise ValueError(f"m and n must be >= 1, got m={m}, n={n}")
    return 4 * m * n + 4 * m * m + 4 * m


def total_param_count(m: int, n: int) -> int:
    return param_count(m, n) + m + 1


@dataclass
class LstmParameters:
    """All weights of the network.

    ``w_*`` are ``(m, n)`` input weights, ``u_*`` are ``(m, m)`` recurrent
    weights, ``b_*`` are length-``m`` biases. ``w_out`` (length ``m``) and the
    scalar ``b_out`` form the sigmoid output layer.
    """

    w_forget: np.ndarray
    w_input: np.ndarray
    w_output: np.ndarray
    w_candidate: np.ndarray
    u_forget: np.ndarray
    u_input: np.ndarray
    u_output: np.ndarray
    u_candidate: np.ndarray
    b_forget: np.ndarray
    b_input: np.ndarray
    b_output: np.ndarray
    b_candidate: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, np.array(getattr(self, f.name), dtype=np.float64))
        self.validate()

    @property
    def m(self) -> int:
        return self.w_forget.shape[0]

    @property
    def n(self) -> int:
        return self.w_forget.shape[1]

    def validate(self) -> None:
        if self.w_forget.ndim != 2:
            raise ValueError("w_forget must be a 2-d (m, n) matrix")
        m, n = self.w_forget.shape
        for name, shape in expected_shapes(m, n).items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(f"{name} has shape {got}, expected {shape} for m={m}, n={n}")

    @classmethod
    def zeros(cls, m: int, n: int) -> "LstmParameters":
        return cls(**{k: np.zeros(s) for k, s in expected_shapes(m, n).items()})

    def blocks(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in BLOCK_NAMES}

    def copy(self) -> "LstmParameters":
        return type(self)(**{k: v.copy() for k, v in self.blocks().items()})

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.blocks().values())

    def size(self) -> int:
        return sum(v.size for v in self.blocks().values())

    # Stacked views in [forget, input, output, candidate] order.
    def stacked_w(self) -> np.ndarray:
        return np.concatenate([self.w_forget, self.w_input, self.w_output, self.w_candidate])

    def stacked_u(self) -> np.ndarray:
        return np.concatenate([self.u_forget, self.u_input, self.u_output, self.u_candidate])

    def stacked_b(self) -> np.ndarray:
        return np.concatenate([self.b_forget, self.b_input, self.b_output, self.b_candidate])


class Gradients(LstmParameters):
    """Loss gradients, one array per :class:`LstmParameters` block."""


def expected_shapes(m: int, n: int) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for gate in ("forget", "input", "output", "candidate"):
        shapes[f"w_{gate}"] = (m, n)
    for gate in ("forget", "input", "output", "candidate"):
        shapes[f"u_{gate}"] = (m, m)
    for gate in ("forget", "input", "output", "candidate"):
        shapes[f"b_{gate}"] = (m,)
    shapes["w_out"] = (m,)
    shapes["b_out"] = ()
    return shapes


@dataclass(frozen=True)
class HyperParams:
    hidden_units: int = 3
    learning_rate: float = 0.0075
    dropout: float = 0.06
    recurrent_dropout: float = 0.14
    batch_size: int = 6800
    max_epochs: int = 100
    patience: int = 10
    seq_len: int = 240

    def __post_init__(self):
        if self.hidden_units < 1:
            raise ValueError(f"hidden_units must be >= 1, got {self.hidden_units}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("dropout", "recurrent_dropout"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {rate}")
        for name in ("batch_size", "max_epochs", "seq_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.patience < 0:
            raise ValueError(f"patience must be >= 0, got {self.patience}")
