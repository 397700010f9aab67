from .autograd import Tensor, backward, no_grad
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    DenseParams,
    LstmParams,
    dense_forward,
    glorot_normal,
    glorot_normal_init,
    lstm_forward,
    lstm_init,
    make_rng,
)
from .optim import AdamState, adam_step, lr_schedule

__all__ = [
    "AdamState",
    "DenseParams",
    "LstmParams",
    "Tensor",
    "adam_step",
    "backward",
    "dense_forward",
    "glorot_normal",
    "glorot_normal_init",
    "load_checkpoint",
    "lr_schedule",
    "lstm_forward",
    "lstm_init",
    "make_rng",
    "no_grad",
    "save_checkpoint",
]
