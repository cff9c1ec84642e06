"""Central finite-difference check of the BPTT gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cell import backward, bce_loss, forward
from .params import BLOCK_NAMES, LstmParameters

# Denominator floor so structurally-zero entries don't blow up the ratio.
REL_ERROR_FLOOR = 1e-6


@dataclass
class GradientCheckReport:
    max_rel_error: dict[str, float]
    tolerance: float

    @property
    def flagged(self) -> list[str]:
        return [k for k, e in self.max_rel_error.items() if not e < self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.flagged

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values())


def relative_error(analytic, numeric) -> np.ndarray:
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), REL_ERROR_FLOOR)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(params: LstmParameters, sequence, label, step: float = 1e-5) -> dict[str, np.ndarray]:
    def loss(p):
        return bce_loss(forward(p, sequence)[0], label)

    probe = params.copy()
    out = {}
    for name in BLOCK_NAMES:
        arr = getattr(probe, name)
        grad = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + step
            up = loss(probe)
            arr[idx] = old - step
            down = loss(probe)
            arr[idx] = old
            grad[idx] = (up - down) / (2.0 * step)
        out[name] = grad
    return out


def gradient_check(params: LstmParameters, sequence, label, step: float = 1e-5,
                   tolerance: float = 1e-4) -> GradientCheckReport:
    """Compare :func:`backward` with central differences, dropout off.

    A block is flagged when its largest entrywise relative error
    ``|a - n| / max(|a| + |n|, 1e-6)`` is not below ``tolerance``.
    """
    _, cache = forward(params, sequence)
    analytic = backward(params, sequence, label, None, cache)
    numeric = numeric_gradient(params, sequence, label, step)
    errors = {}
    for name in BLOCK_NAMES:
        errors[name] = float(np.max(relative_error(getattr(analytic, name), numeric[name]), initial=0.0))
    return GradientCheckReport(errors, tolerance)
