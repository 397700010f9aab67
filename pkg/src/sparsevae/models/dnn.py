from __future__ import annotations

import numpy as np

from ..data.preprocessing import WindowBatch
from ..errors import DataError, DimensionError
from ..nn import autograd as ag
from ..nn.autograd import Tensor, no_grad
from ..nn.layers import dense_forward, glorot_normal_init, lstm_forward, lstm_init
from .architecture import VaeArchitecture
from .losses import LossBreakdown, binary_cross_entropy
from .vae import Module


class DNNClassifier(Module):
    """Window classifier built like the VAE encoder plus a sigmoid unit.

    Hidden states of the last encoder layer are averaged over time before
    the output unit, giving one anomaly probability per window.
    """

    def __init__(self, arch: VaeArchitecture, seed=0):
        super().__init__()
        self.arch = arch
        seeds = iter(np.random.SeedSequence(seed).spawn(32))
        widths = arch.encoder_widths
        n_td = 1 + len(arch.td_dense_layers)
        prev = arch.input_width
        self.dense = []
        for k in range(n_td):
            self.dense.append(self._add(f"enc.dense{k}", glorot_normal_init(
                prev, widths[k], next(seeds), "relu", f"enc.dense{k}")))
            prev = widths[k]
        self.lstm = []
        for k in range(n_td, len(widths)):
            name = f"enc.lstm{k - n_td}"
            self.lstm.append(self._add(name, lstm_init(prev, widths[k], next(seeds), name)))
            prev = widths[k]
        self.out = self._add("out", glorot_normal_init(prev, 1, next(seeds), "sigmoid", "out"))

    def forward(self, x) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[-1] != self.arch.input_width:
            raise DimensionError(f"DNN expects [B, T, {self.arch.input_width}], got {x.shape}")
        h = Tensor(x)
        for p in self.dense:
            h = dense_forward(h, p)
        for p in self.lstm:
            h, _ = lstm_forward(h, p)
        return ag.reshape(dense_forward(ag.mean(h, axis=1), self.out), (x.shape[0],))

    def batch_loss(self, batch: WindowBatch, rng=None) -> LossBreakdown:
        labels = batch.window_labels
        if labels is None or (np.asarray(labels) < 0).any():
            raise DataError("the classifier needs a label for every training window")
        bce = binary_cross_entropy(self.forward(batch.x), labels.astype(np.float64))
        return LossBreakdown(bce, {"bce": bce})

    def prepare(self, batch: WindowBatch) -> None:
        pass

    def predict_proba(self, x) -> np.ndarray:
        with no_grad():
            return self.forward(x).data.copy()
