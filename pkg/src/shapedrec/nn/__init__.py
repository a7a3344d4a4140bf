"""Minimal float64 autodiff, layers and optimizer."""
from .gradcheck import GradCheckReport, grad_check
from .layers import MLP, Dense, Embedding, GRUCell, dense, gru_cell, gru_sequence
from .optim import Adam, adam_step
from .params import ParamStore
from .tensor import (
    Tensor,
    bce_with_logits,
    concat,
    log_softmax,
    log_softmax_pick,
    no_grad,
    pick,
    relu,
    sigmoid,
    softmax,
    softmax_temperature,
    stack,
    stop_gradient,
    take_rows,
    tanh,
)

__all__ = [
    "Adam",
    "Dense",
    "Embedding",
    "GRUCell",
    "GradCheckReport",
    "MLP",
    "ParamStore",
    "Tensor",
    "adam_step",
    "bce_with_logits",
    "concat",
    "dense",
    "grad_check",
    "gru_cell",
    "gru_sequence",
    "log_softmax",
    "log_softmax_pick",
    "no_grad",
    "pick",
    "relu",
    "sigmoid",
    "softmax",
    "softmax_temperature",
    "stack",
    "stop_gradient",
    "take_rows",
    "tanh",
]
