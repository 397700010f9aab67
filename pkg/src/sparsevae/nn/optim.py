"""Adam with L2 weight decay and a plateau learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import DimensionError
from .autograd import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l2_lambda: float = 1e-3
    step: int = 0
    initial_lr: float | None = None
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.initial_lr is None:
            self.initial_lr = self.lr


def adam_step(params: Sequence[Tensor], gradients: Sequence[np.ndarray], state: AdamState):
    """Update ``params`` in place and return ``(params, state)``.

    The L2 term ``l2_lambda * w`` is added to each gradient before the
    moment updates; it does not show up in any reported loss.
    """
    if len(params) != len(gradients):
        raise DimensionError(f"adam: {len(params)} parameters but {len(gradients)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for k, (p, g) in enumerate(zip(params, gradients)):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise DimensionError(
                f"adam: gradient shape {g.shape} does not match parameter {p.name or k} {p.data.shape}"
            )
        if state.l2_lambda:
            g = g + state.l2_lambda * p.data
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        m_hat = state.m[k] / (1.0 - b1 ** t)
        v_hat = state.v[k] / (1.0 - b2 ** t)
        p.data = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def lr_schedule(state: AdamState, validation_loss_history: Sequence[float],
                patience: int = 10, factor: float = 0.5, floor: float = 1e-4) -> AdamState:
    """Recompute the learning rate from the full validation history.

    Replays the history: each time the best loss has gone ``patience``
    epochs without strictly improving, the rate is multiplied by ``factor``
    and the wait counter restarts. The rate never drops below ``floor``
    (or below the initial rate, if that is already smaller).
    """
    if len(validation_loss_history) == 0:
        raise ValueError("lr_schedule needs at least one validation loss")
    best = np.inf
    wait = 0
    reductions = 0
    for loss in validation_loss_history:
        if loss < best:
            best = loss
            wait = 0
        else:
            wait += 1
            if wait >= patience:
                reductions += 1
                wait = 0
    lr = state.initial_lr * factor ** reductions
    state.lr = max(lr, min(floor, state.initial_lr))
    return state
