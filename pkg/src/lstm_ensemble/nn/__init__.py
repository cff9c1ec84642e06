"""Small dense LSTM engine: cell, BPTT, Adam, initializers, gradient check."""

from .adam import AdamState, adam_step
from .cell import (
    CellState,
    DropoutMasks,
    ForwardCache,
    backward,
    backward_batch,
    batch_loss,
    bce_loss,
    cell_step,
    forward,
    forward_batch,
    sigmoid,
)
from .gradcheck import GradientCheckReport, gradient_check
from .init import ENSEMBLE_SCHEMES, InitializerScheme, init_parameters
from .params import BLOCK_NAMES, Gradients, HyperParams, LstmParameters, param_count, total_param_count

__all__ = [
    "AdamState", "adam_step", "CellState", "DropoutMasks", "ForwardCache", "backward",
    "backward_batch", "batch_loss", "bce_loss", "cell_step", "forward", "forward_batch",
    "sigmoid", "GradientCheckReport", "gradient_check", "ENSEMBLE_SCHEMES",
    "InitializerScheme", "init_parameters", "BLOCK_NAMES", "Gradients", "LstmParameters",
    "param_count", "total_param_count", "HyperParams",
]
