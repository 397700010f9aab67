"""LSTM variational autoencoders: VAE Err, VAE Prob, VAE SL and VAE MD.

All four share one class; ``variant`` switches the output heads and the
extra softmax heads next to the bottleneck:

* ``err``  - linear reconstruction, squared error + KL
* ``prob`` - Gaussian (continuous) and Bernoulli (binary) output heads
* ``sl``   - ``prob`` plus a 2-way label head feeding the decoder
* ``md``   - ``sl`` plus a K-way metadata head feeding the decoder
"""

from __future__ import annotations

import numpy as np

from ..data.preprocessing import WindowBatch
from ..errors import ConfigError, DimensionError
from ..nn import autograd as ag
from ..nn.autograd import Tensor, no_grad
from ..nn.layers import dense_forward, glorot_normal_init, lstm_forward, lstm_init, make_rng
from .architecture import VARIANTS, VaeArchitecture
from .losses import (
    LossBreakdown,
    LossWeights,
    ReconstructionHeads,
    VaeOutput,
    encode_window_labels,
    encode_window_metadata,
    split_columns,
    vae_err_loss,
    vae_md_loss,
    vae_prob_loss,
    vae_sl_loss,
    window_reconstruction_term,
)


def reparameterize(mu, logvar, noise) -> Tensor:
    mu, logvar = ag.as_tensor(mu), ag.as_tensor(logvar)
    noise = np.asarray(noise, dtype=np.float64)
    if mu.shape != logvar.shape or mu.shape != noise.shape:
        raise DimensionError(f"reparameterize: shapes {mu.shape}, {logvar.shape}, {noise.shape} differ")
    return mu + ag.exp(0.5 * logvar) * noise


class Module:
    """Parameter bookkeeping shared by the neural models."""

    def __init__(self):
        self._layers: dict[str, object] = {}

    def _add(self, name, layer):
        self._layers[name] = layer
        return layer

    def parameters(self) -> list[Tensor]:
        out = []
        for layer in self._layers.values():
            out.extend(layer.parameters())
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            if p.name not in state:
                raise KeyError(f"missing parameter {p.name!r}")
            if state[p.name].shape != p.data.shape:
                raise DimensionError(f"{p.name}: shape {state[p.name].shape} != {p.data.shape}")
            p.data = np.array(state[p.name], dtype=np.float64)


def _run_stack(h, dense_layers, lstm_layers):
    for p in dense_layers:
        h = dense_forward(h, p)
    for p in lstm_layers:
        h, _ = lstm_forward(h, p)
    return h


POOLINGS = ("mean", "max", "last")


def _pool(h, how: str) -> Tensor:
    """Collapse encoder states [B, T, H] to [B, H] for the softmax heads."""
    if how == "mean":
        return ag.mean(h, axis=1)
    if how == "max":
        return ag.tmax(h, axis=1)
    return h[:, -1, :]


class VAE(Module):
    def __init__(self, arch: VaeArchitecture, column_kinds, variant: str = "err",
                 weights: LossWeights | None = None, seed=0, pooling: str = "max"):
        super().__init__()
        if pooling not in POOLINGS:
            raise ConfigError(f"unknown pooling {pooling!r}; choose from {POOLINGS}")
        if variant not in VARIANTS:
            raise ConfigError(f"unknown VAE variant {variant!r}; choose from {VARIANTS}")
        if len(column_kinds) != arch.input_width:
            raise DimensionError(f"{len(column_kinds)} column kinds for input width {arch.input_width}")
        self.arch = arch
        self.variant = variant
        self.pooling = pooling
        self.column_kinds = tuple(column_kinds)
        self.weights = weights or LossWeights()
        self.cont_cols, self.bin_cols = split_columns(self.column_kinds)

        seeds = iter(np.random.SeedSequence(seed).spawn(64))
        dense = lambda i, o, act, name: self._add(name, glorot_normal_init(i, o, next(seeds), act, name))
        lstm = lambda i, o, name: self._add(name, lstm_init(i, o, next(seeds), name))

        F = arch.input_width
        widths = arch.encoder_widths
        n_td = 1 + len(arch.td_dense_layers)

        self.enc_dense = [dense(F, widths[0], "relu", "enc.dense0")]
        for k in range(1, n_td):
            self.enc_dense.append(dense(widths[k - 1], widths[k], "relu", f"enc.dense{k}"))
        self.enc_lstm = []
        for k in range(n_td, len(widths)):
            self.enc_lstm.append(lstm(widths[k - 1], widths[k], f"enc.lstm{k - n_td}"))
        h = widths[-1]
        z = arch.bottleneck_width
        self.mu_layer = dense(h, z, "linear", "latent.mu")
        self.logvar_layer = dense(h, z, "linear", "latent.logvar")
        self.label_head = dense(h, 2, "softmax", "head.label") if variant in ("sl", "md") else None
        self.meta_head = dense(h, arch.n_categories, "softmax", "head.metadata") if variant == "md" else None

        c = self.decoder_input_width
        dec_widths = widths[::-1]  # mirror: innermost first
        n_lstm = len(arch.lstm_layers)
        self.dec_lstm = []
        prev = c
        for k in range(n_lstm):
            self.dec_lstm.append(lstm(prev, dec_widths[k], f"dec.lstm{k}"))
            prev = dec_widths[k]
        self.dec_dense = []
        for k in range(n_lstm, len(dec_widths)):
            self.dec_dense.append(dense(prev, dec_widths[k], "relu", f"dec.dense{k - n_lstm}"))
            prev = dec_widths[k]

        if variant == "err":
            self.out_layer = dense(prev, F, "linear", "out.reconstruction")
        else:
            nc, nb = self.cont_cols.size, self.bin_cols.size
            self.out_mean = dense(prev, nc, "linear", "out.mean") if nc else None
            self.out_logvar = dense(prev, nc, "linear", "out.logvar") if nc else None
            self.out_bin = dense(prev, nb, "sigmoid", "out.binary") if nb else None

    @property
    def decoder_input_width(self) -> int:
        width = self.arch.bottleneck_width
        if self.variant in ("sl", "md"):
            width += 2
        if self.variant == "md":
            width += self.arch.n_categories
        return width

    # -- forward -----------------------------------------------------------
    def encode(self, x):
        h = _run_stack(Tensor(x), self.enc_dense, self.enc_lstm)
        return h, dense_forward(h, self.mu_layer), dense_forward(h, self.logvar_layer)

    def forward(self, x, rng=None, noise=None) -> VaeOutput:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[-1] != self.arch.input_width:
            raise DimensionError(f"VAE expects [B, T, {self.arch.input_width}], got {x.shape}")
        rng = make_rng(rng if rng is not None else 0)
        h, mu, logvar = self.encode(x)
        if noise is None:
            noise = rng.standard_normal(mu.shape)
        s = reparameterize(mu, logvar, noise)

        parts = [s]
        pi = meta = y_sampled = None
        B, T = x.shape[:2]
        if self.label_head is not None or self.meta_head is not None:
            pooled = _pool(h, self.pooling)
        if self.label_head is not None:
            pi = dense_forward(pooled, self.label_head)
            draws = rng.uniform(size=B) < pi.data[:, 0]
            y_sampled = np.stack([draws, ~draws], axis=1).astype(np.float64)
            parts.append(ag.broadcast_to(ag.reshape(pi, (B, 1, 2)), (B, T, 2)))
        if self.meta_head is not None:
            meta = dense_forward(pooled, self.meta_head)
            k = self.arch.n_categories
            parts.append(ag.broadcast_to(ag.reshape(meta, (B, 1, k)), (B, T, k)))
        c = parts[0] if len(parts) == 1 else ag.concat(parts, axis=-1)

        d = c
        for p in self.dec_lstm:
            d, _ = lstm_forward(d, p)
        for p in self.dec_dense:
            d = dense_forward(d, p)

        out = VaeOutput(mu=mu, logvar=logvar, sample=s, noise=noise, decoder_input=c,
                        pi=pi, y_sampled=y_sampled, metadata=meta)
        if self.variant == "err":
            out.reconstruction = dense_forward(d, self.out_layer)
        else:
            out.heads = ReconstructionHeads(
                cont_mean=dense_forward(d, self.out_mean) if self.out_mean is not None else None,
                cont_logvar=dense_forward(d, self.out_logvar) if self.out_logvar is not None else None,
                bin_mean=dense_forward(d, self.out_bin) if self.out_bin is not None else None,
            )
        return out

    # -- training interface -------------------------------------------------
    def loss(self, x, outputs: VaeOutput, label=None, metadata=None) -> LossBreakdown:
        w = self.weights
        if self.variant == "err":
            return vae_err_loss(x, outputs.reconstruction, outputs.mu, outputs.logvar, w)
        if self.variant == "prob":
            return vae_prob_loss(x, outputs.heads, outputs.mu, outputs.logvar, self.column_kinds, w)
        if self.variant == "sl":
            return vae_sl_loss(x, outputs, label, w, self.column_kinds)
        return vae_md_loss(x, outputs, label, metadata, w, self.column_kinds)

    def batch_loss(self, batch: WindowBatch, rng) -> LossBreakdown:
        out = self.forward(batch.x, rng=rng)
        label = metadata = None
        if self.variant in ("sl", "md"):
            label = encode_window_labels(batch.window_labels, len(batch))
        if self.variant == "md":
            metadata = encode_window_metadata(batch.window_metadata, len(batch), self.arch.n_categories)
        return self.loss(batch.x, out, label, metadata)

    def prepare(self, batch: WindowBatch) -> None:
        """Resolve data-dependent defaults before training."""
        if self.variant in ("sl", "md"):
            self.weights = self.weights.balanced(batch.window_labels)

    # -- scoring --------------------------------------------------------------
    def score(self, x, n_samples: int = 10, seed=0) -> dict[str, np.ndarray]:
        """Per-window deviation averaged over ``n_samples`` latent draws.

        Also returns the label-head probability of the anomalous class and
        the metadata probabilities when the variant has those heads. The
        decoder always consumes the predicted label distribution.
        """
        x = np.asarray(x, dtype=np.float64)
        rng = make_rng(seed)
        total = np.zeros(x.shape[0])
        with no_grad():
            for _ in range(n_samples):
                out = self.forward(x, rng=rng)
                total += window_reconstruction_term(x, out, self.column_kinds).data
        result = {"deviation": total / n_samples}
        if out.pi is not None:
            result["pi_anomalous"] = out.pi.data[:, 0].copy()
        if out.metadata is not None:
            result["metadata_probs"] = out.metadata.data.copy()
        return result
