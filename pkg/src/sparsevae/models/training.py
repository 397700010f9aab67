from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..data.preprocessing import WindowBatch
from ..errors import TrainingError, UsageError
from ..nn.autograd import backward, no_grad
from ..nn.layers import make_rng
from ..nn.optim import AdamState, adam_step, lr_schedule

log = logging.getLogger(__name__)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    validation_loss: list[float] = field(default_factory=list)
    learning_rate: list[float] = field(default_factory=list)
    terms: list[dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "validation_loss": self.validation_loss,
            "learning_rate": self.learning_rate,
        }


def _check_finite(breakdown, where: str) -> None:
    bad = breakdown.first_nonfinite()
    if bad is not None:
        raise TrainingError(f"non-finite loss term {bad!r} during {where}")


def train(model, train_data: WindowBatch, validation_data: WindowBatch | None = None,
          epochs: int = 30, batch_size: int = 32, seed=0, lr: float = 1e-3,
          l2_lambda: float = 1e-3, patience: int = 10, lr_floor: float = 1e-4):
    """Mini-batch Adam training; window order is reshuffled every epoch.

    Returns ``(model, history)``. The model keeps the parameters of the
    last epoch.
    """
    if len(train_data) == 0:
        raise UsageError("training data holds no windows")
    history = TrainHistory()
    if epochs <= 0:
        return model, history
    model.prepare(train_data)
    params = model.parameters()
    state = AdamState(lr=lr, l2_lambda=l2_lambda)
    shuffle_rng, noise_rng = (make_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    n = len(train_data)

    for epoch in range(epochs):
        order = shuffle_rng.permutation(n)
        total, count = 0.0, 0
        for start in range(0, n, batch_size):
            batch = train_data.subset(order[start:start + batch_size])
            breakdown = model.batch_loss(batch, noise_rng)
            _check_finite(breakdown, f"epoch {epoch} training")
            grads = backward(breakdown.total, params)
            adam_step(params, grads, state)
            total += float(breakdown.total.data) * len(batch)
            count += len(batch)
        history.train_loss.append(total / count)

        monitor = history.train_loss
        if validation_data is not None and len(validation_data):
            with no_grad():
                vb = model.batch_loss(validation_data, make_rng(np.random.SeedSequence([seed, epoch])))
            _check_finite(vb, f"epoch {epoch} validation")
            history.validation_loss.append(float(vb.total.data))
            history.terms.append(vb.values())
            monitor = history.validation_loss
        history.learning_rate.append(state.lr)
        lr_schedule(state, monitor, patience=patience, floor=lr_floor)
        log.debug("epoch %d train %.5f val %s lr %.2e", epoch, history.train_loss[-1],
                  history.validation_loss[-1:] or "-", state.lr)
    return model, history
