"""Adam with bias-corrected moment estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import BLOCK_NAMES, Gradients, LstmParameters


@dataclass
class AdamState:
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: LstmParameters, **kwargs) -> "AdamState":
        blocks = params.blocks()
        return cls(first={k: np.zeros_like(v) for k, v in blocks.items()},
                   second={k: np.zeros_like(v) for k, v in blocks.items()}, **kwargs)


def adam_step(params: LstmParameters, grads: Gradients, state: AdamState,
              lr: float) -> tuple[LstmParameters, AdamState]:
    """One Adam update. Inputs are left untouched; new params and state are returned.

    Raises ValueError naming the first block with a non-finite gradient.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for name in BLOCK_NAMES:
        g = getattr(grads, name)
        if g.shape != getattr(params, name).shape:
            raise ValueError(f"gradient {name} has shape {g.shape}, parameter has {getattr(params, name).shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient in {name}")

    t = state.step + 1
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new_blocks, first, second = {}, {}, {}
    for name in BLOCK_NAMES:
        g = getattr(grads, name)
        m_prev = state.first.get(name, np.zeros_like(g))
        v_prev = state.second.get(name, np.zeros_like(g))
        first[name] = b1 * m_prev + (1.0 - b1) * g
        second[name] = b2 * v_prev + (1.0 - b2) * (g * g)
        m_hat = first[name] / bc1
        v_hat = second[name] / bc2
        new_blocks[name] = getattr(params, name) - lr * m_hat / (np.sqrt(v_hat) + eps)
    new_state = AdamState(first=first, second=second, step=t, beta1=b1, beta2=b2, epsilon=eps)
    return LstmParameters(**new_blocks), new_state
