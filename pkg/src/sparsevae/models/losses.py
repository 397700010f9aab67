"""Loss terms for the VAE family and the classifier.

Scalar helpers (``kl_loss``, ``gaussian_nll`` ...) average over every
element. The ``*_loss`` assemblies work per window: each window gets its own
reconstruction / KL / label / metadata value, masks are applied per window,
and the batch loss is the mean over windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..data.dataset import BINARY, CONTINUOUS
from ..errors import ConfigError, DataError
from ..nn import autograd as ag
from ..nn.autograd import Tensor, as_tensor

LOGVAR_RANGE = (-10.0, 10.0)
PROB_RANGE = (1e-7, 1.0 - 1e-7)
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class LossWeights:
    w_recon: float = 1.0
    w_kl: float = 0.01
    w_label: float = 1.0
    # None means "derive from the labeled class balance" (see balanced())
    w_anomaly_class: float | None = None
    w_metadata: float = 1.0

    def __post_init__(self):
        values = [self.w_recon, self.w_kl, self.w_label, self.w_metadata]
        if self.w_anomaly_class is not None:
            values.append(self.w_anomaly_class)
        if any(v < 0 for v in values):
            raise ConfigError(f"loss weights must be nonnegative: {self}")
        if not any(v > 0 for v in values):
            raise ConfigError("at least one loss weight must be positive")

    @property
    def anomaly_class(self) -> float:
        return 1.0 if self.w_anomaly_class is None else self.w_anomaly_class

    def balanced(self, window_labels) -> "LossWeights":
        """Fill an unset anomaly-class weight with #normal / #anomalous labels."""
        if self.w_anomaly_class is not None or window_labels is None:
            return self
        labels = np.asarray(window_labels)
        n_anom = int((labels == 1).sum())
        n_norm = int((labels == 0).sum())
        weight = n_norm / n_anom if n_anom and n_norm else 1.0
        return LossWeights(self.w_recon, self.w_kl, self.w_label, weight, self.w_metadata)


@dataclass
class LossBreakdown:
    total: Tensor
    terms: dict[str, Tensor] = field(default_factory=dict)

    def values(self) -> dict[str, float]:
        out = {k: float(v.data) for k, v in self.terms.items()}
        out["total"] = float(self.total.data)
        return out

    def first_nonfinite(self) -> str | None:
        for name, t in self.terms.items():
            if not np.all(np.isfinite(t.data)):
                return name
        if not np.all(np.isfinite(self.total.data)):
            return "total"
        return None


# -- elementwise building blocks --------------------------------------------

def _kl_elements(mu, logvar) -> Tensor:
    logvar = ag.clip(logvar, *LOGVAR_RANGE)
    return -0.5 * (1.0 + logvar - ag.square(mu) - ag.exp(logvar))


def _gaussian_elements(x, mean, logvar) -> Tensor:
    logvar = ag.clip(logvar, *LOGVAR_RANGE)
    return 0.5 * (LOG_2PI + logvar + ag.square(x - mean) * ag.exp(-logvar))


def _bernoulli_elements(x, p) -> Tensor:
    p = ag.clip(p, *PROB_RANGE)
    x = as_tensor(x)
    return -(x * ag.log(p) + (1.0 - x) * ag.log(1.0 - p))


def _per_window(t: Tensor) -> Tensor:
    """Mean over every axis but the first."""
    return ag.mean(ag.reshape(t, (t.shape[0], -1)), axis=1)


# -- scalar losses --------------------------------------------------------------

def kl_loss(mu, logvar) -> Tensor:
    """KL divergence to the standard normal, summed over the latent axis.

    Leading axes (batch, time) are averaged.
    """
    mu, logvar = as_tensor(mu), as_tensor(logvar)
    per_pos = ag.tsum(_kl_elements(mu, logvar), axis=-1)
    return ag.mean(per_pos)


def reconstruction_error(x, x_tilde) -> Tensor:
    return ag.mean(ag.square(as_tensor(x) - as_tensor(x_tilde)))


def gaussian_nll(x, mean, logvar) -> Tensor:
    return ag.mean(_gaussian_elements(as_tensor(x), as_tensor(mean), as_tensor(logvar)))


def bernoulli_nll(x, p) -> Tensor:
    return ag.mean(_bernoulli_elements(as_tensor(x), as_tensor(p)))


def binary_cross_entropy(p, targets) -> Tensor:
    return bernoulli_nll(targets, p)


# -- output containers -------------------------------------------------------------

@dataclass
class ReconstructionHeads:
    """Probabilistic decoder outputs; a head is None if no column of its kind exists."""

    cont_mean: Tensor | None = None
    cont_logvar: Tensor | None = None
    bin_mean: Tensor | None = None


@dataclass
class VaeOutput:
    mu: Tensor
    logvar: Tensor
    sample: Tensor
    noise: np.ndarray
    decoder_input: Tensor
    reconstruction: Tensor | None = None
    heads: ReconstructionHeads | None = None
    pi: Tensor | None = None
    y_sampled: np.ndarray | None = None
    metadata: Tensor | None = None

    def x_tilde(self, column_kinds) -> np.ndarray:
        """Point reconstruction: means of the output distributions."""
        if self.reconstruction is not None:
            return self.reconstruction.data
        cont, binary = split_columns(column_kinds)
        shape = self.mu.shape[:2] + (len(column_kinds),)
        out = np.zeros(shape)
        if cont.size:
            out[..., cont] = self.heads.cont_mean.data
        if binary.size:
            out[..., binary] = self.heads.bin_mean.data
        return out


def split_columns(column_kinds: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    kinds = np.asarray(column_kinds)
    bad = set(kinds.tolist()) - {CONTINUOUS, BINARY}
    if bad:
        raise DataError(f"unknown column kinds {sorted(bad)}")
    return np.flatnonzero(kinds == CONTINUOUS), np.flatnonzero(kinds == BINARY)


def check_one_hot(arr, width: int, what: str) -> tuple[np.ndarray, np.ndarray]:
    """Validate rows that are one-hot or all zero (= absent); return (array, present mask)."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != width:
        raise DataError(f"{what} must have shape [B, {width}], got {arr.shape}")
    if not np.isin(arr, (0.0, 1.0)).all() or (arr.sum(axis=1) > 1).any():
        raise DataError(f"{what} rows must be one-hot or all zero (absent)")
    return arr, arr.sum(axis=1) == 1


def encode_window_labels(window_labels, batch_size: int) -> np.ndarray:
    """Window labels {1, 0, -1} to one-hot [anomalous, normal] rows; -1 gives zeros."""
    out = np.zeros((batch_size, 2))
    if window_labels is None:
        return out
    labels = np.asarray(window_labels)
    out[labels == 1, 0] = 1.0
    out[labels == 0, 1] = 1.0
    return out


def encode_window_metadata(window_metadata, batch_size: int, k: int) -> np.ndarray:
    out = np.zeros((batch_size, k))
    if window_metadata is None:
        return out
    ids = np.asarray(window_metadata)
    rows = np.flatnonzero(ids >= 0)
    out[rows, ids[rows]] = 1.0
    return out


# -- per-window reconstruction terms -----------------------------------------

def _window_sq_error(x, x_tilde) -> Tensor:
    return _per_window(ag.square(as_tensor(x) - x_tilde))


def _window_recon_prob(x: np.ndarray, heads: ReconstructionHeads, column_kinds) -> Tensor:
    cont, binary = split_columns(column_kinds)
    if binary.size:
        xb = x[..., binary]
        if not np.isin(xb, (0.0, 1.0)).all():
            raise DataError("binary columns must hold only 0 or 1 for the Bernoulli term")
    term = None
    if cont.size:
        term = _per_window(_gaussian_elements(Tensor(x[..., cont]), heads.cont_mean, heads.cont_logvar))
    if binary.size:
        b = _per_window(_bernoulli_elements(Tensor(x[..., binary]), heads.bin_mean))
        term = b if term is None else term + b
    return term


def _window_kl(mu, logvar) -> Tensor:
    per_pos = ag.tsum(_kl_elements(mu, logvar), axis=-1)
    return _per_window(per_pos) if per_pos.ndim > 1 else per_pos


def window_reconstruction_term(x, outputs: VaeOutput, column_kinds) -> Tensor:
    """The model's own per-window reconstruction loss (used for scoring too)."""
    x = np.asarray(x, dtype=np.float64)
    if outputs.heads is not None:
        return _window_recon_prob(x, outputs.heads, column_kinds)
    return _window_sq_error(x, outputs.reconstruction)


# -- assembled losses ------------------------------------------------------------

def vae_err_loss(x, x_tilde, mu, logvar, w: LossWeights) -> LossBreakdown:
    recon = reconstruction_error(x, x_tilde)
    kl = kl_loss(mu, logvar)
    total = w.w_recon * recon + w.w_kl * kl
    return LossBreakdown(total, {"reconstruction": recon, "kl": kl})


def vae_prob_loss(x, heads: ReconstructionHeads, mu, logvar, column_kinds, w: LossWeights) -> LossBreakdown:
    recon = ag.mean(_window_recon_prob(np.asarray(x, dtype=np.float64), heads, column_kinds))
    kl = kl_loss(mu, logvar)
    total = w.w_recon * recon + w.w_kl * kl
    return LossBreakdown(total, {"reconstruction": recon, "kl": kl})


def _label_terms(pi: Tensor, label, w: LossWeights):
    b = pi.shape[0]
    if label is None:
        onehot, present = np.zeros((b, 2)), np.zeros(b, dtype=bool)
    else:
        onehot, present = check_one_hot(label, 2, "anomaly label")
        if onehot.shape[0] != b:
            raise DataError(f"anomaly label has {onehot.shape[0]} rows for {b} windows")
    anomalous = present & (onehot[:, 0] == 1)
    per_window = ag.mean(_bernoulli_elements(Tensor(onehot), pi), axis=1)
    scale = np.where(anomalous, w.anomaly_class, 1.0) * present
    label_term = ag.mean(per_window * scale)
    return label_term, anomalous


def vae_sl_loss(x, outputs: VaeOutput, label, w: LossWeights, column_kinds) -> LossBreakdown:
    """Reconstruction probability + KL + weighted label likelihood.

    ``label`` is None or [B, 2] one-hot rows (anomalous, normal); all-zero
    rows mark windows without a label. Unlabeled windows contribute exactly
    zero label loss, windows labeled anomalous contribute exactly zero
    reconstruction loss.
    """
    label_term, anomalous = _label_terms(outputs.pi, label, w)
    recon_w = window_reconstruction_term(x, outputs, column_kinds)
    recon = ag.mean(recon_w * (~anomalous).astype(np.float64))
    kl = ag.mean(_window_kl(outputs.mu, outputs.logvar))
    total = w.w_recon * recon + w.w_kl * kl + w.w_label * label_term
    return LossBreakdown(total, {"reconstruction": recon, "kl": kl, "label": label_term})


def categorical_nll_windows(probs: Tensor, onehot: np.ndarray) -> Tensor:
    p = ag.clip(probs, PROB_RANGE[0], 1.0)
    return -ag.tsum(Tensor(onehot) * ag.log(p), axis=1)


def vae_md_loss(x, outputs: VaeOutput, label, metadata, w: LossWeights, column_kinds) -> LossBreakdown:
    base = vae_sl_loss(x, outputs, label, w, column_kinds)
    b, k = outputs.metadata.shape
    if metadata is None:
        onehot, present = np.zeros((b, k)), np.zeros(b, dtype=bool)
    else:
        onehot, present = check_one_hot(metadata, k, "metadata label")
        if onehot.shape[0] != b:
            raise DataError(f"metadata label has {onehot.shape[0]} rows for {b} windows")
    meta = ag.mean(categorical_nll_windows(outputs.metadata, onehot) * present.astype(np.float64))
    total = base.total + w.w_metadata * meta
    return LossBreakdown(total, {**base.terms, "metadata": meta})
