"""Weight initialization schemes for the ensemble members.

Each scheme fills the eight LSTM weight matrices; fan-in/fan-out are taken
per matrix (an ``(rows, cols)`` matrix has ``fan_in = cols`` and
``fan_out = rows``). Biases always start at zero. The output layer is an
ordinary dense unit and always gets Glorot-uniform weights, whatever the
scheme, so that every member has a gradient path into the LSTM layer.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .params import LstmParameters, expected_shapes

STDDEV = 0.05
CONSTANT = 0.05


class InitializerScheme(str, Enum):
    RANDOM_NORMAL = "RandomNormal"
    RANDOM_UNIFORM = "RandomUniform"
    TRUNCATED_NORMAL = "TruncatedNormal"
    ZEROS = "Zeros"
    ONES = "Ones"
    GLOROT_NORMAL = "GlorotNormal"
    GLOROT_UNIFORM = "GlorotUniform"
    IDENTITY = "Identity"
    ORTHOGONAL = "Orthogonal"
    CONSTANT = "Constant"
    VARIANCE_SCALING = "VarianceScaling"

    @classmethod
    def parse(cls, value: "str | InitializerScheme") -> "InitializerScheme":
        if isinstance(value, cls):
            return value
        for scheme in cls:
            if value.lower() in (scheme.value.lower(), scheme.name.lower()):
                return scheme
        valid = ", ".join(s.value for s in cls)
        raise ValueError(f"unknown initializer {value!r}; valid schemes: {valid}")


# Member order of the ensemble.
ENSEMBLE_SCHEMES = tuple(InitializerScheme)


def truncated_normal(rng: np.random.Generator, shape, stddev: float, mean: float = 0.0) -> np.ndarray:
    """Normal draws with anything beyond two standard deviations redrawn."""
    out = rng.normal(mean, stddev, size=shape)
    bad = np.abs(out - mean) > 2.0 * stddev
    while bad.any():
        out[bad] = rng.normal(mean, stddev, size=int(bad.sum()))
        bad = np.abs(out - mean) > 2.0 * stddev
    return out


def orthogonal(rng: np.random.Generator, shape) -> np.ndarray:
    rows, cols = shape
    a = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    # sign fix makes the result uniformly distributed over orthogonal matrices
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


def glorot_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    fan_in, fan_out = _fans(shape)
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _fans(shape) -> tuple[int, int]:
    if len(shape) == 1:
        return shape[0], 1
    rows, cols = shape
    return cols, rows


def init_matrix(scheme: InitializerScheme, rng: np.random.Generator, shape) -> np.ndarray:
    fan_in, fan_out = _fans(shape)
    if scheme is InitializerScheme.RANDOM_NORMAL:
        return rng.normal(0.0, STDDEV, size=shape)
    if scheme is InitializerScheme.RANDOM_UNIFORM:
        return rng.uniform(-STDDEV, STDDEV, size=shape)
    if scheme is InitializerScheme.TRUNCATED_NORMAL:
        return truncated_normal(rng, shape, STDDEV)
    if scheme is InitializerScheme.ZEROS:
        return np.zeros(shape)
    if scheme is InitializerScheme.ONES:
        return np.ones(shape)
    if scheme is InitializerScheme.GLOROT_NORMAL:
        return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=shape)
    if scheme is InitializerScheme.GLOROT_UNIFORM:
        return glorot_uniform(rng, shape)
    if scheme is InitializerScheme.IDENTITY:
        if shape[0] != shape[1]:
            return glorot_uniform(rng, shape)
        return np.eye(shape[0])
    if scheme is InitializerScheme.ORTHOGONAL:
        return orthogonal(rng, shape)
    if scheme is InitializerScheme.CONSTANT:
        return np.full(shape, CONSTANT)
    if scheme is InitializerScheme.VARIANCE_SCALING:
        return truncated_normal(rng, shape, np.sqrt(1.0 / fan_in))
    raise ValueError(f"unhandled scheme {scheme}")


def init_parameters(scheme: "InitializerScheme | str", m: int, n: int, seed: int) -> LstmParameters:
    """Build a fresh parameter set; identical ``(scheme, m, n, seed)`` give identical arrays."""
    scheme = InitializerScheme.parse(scheme)
    if m < 1 or n < 1:
        raise ValueError(f"m and n must be >= 1, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    blocks = {}
    for name, shape in expected_shapes(m, n).items():
        if name.startswith(("w_", "u_")) and name != "w_out":
            blocks[name] = init_matrix(scheme, rng, shape)
        else:
            blocks[name] = np.zeros(shape)
    blocks["w_out"] = glorot_uniform(rng, (m,))
    return LstmParameters(**blocks)
