"""Dense and LSTM layers with Glorot-normal initialization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError
from .autograd import ACTIVATIONS, Tensor, _result, _sigmoid, add, as_tensor, matmul

GATES = ("input", "forget", "cell", "output")


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator; ``seed`` may be an int or a SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def glorot_normal(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=(fan_in, fan_out))


@dataclass
class DenseParams:
    weights: Tensor
    bias: Tensor
    activation: str = "linear"
    name: str = "dense"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        w, b = self.weights.shape, self.bias.shape
        if len(w) != 2 or b != (w[1],):
            raise DimensionError(f"{self.name}: weights {w} inconsistent with bias {b}")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[1]

    def parameters(self) -> list[Tensor]:
        return [self.weights, self.bias]


def glorot_normal_init(fan_in: int, fan_out: int, rng_seed=0, activation: str = "linear",
                       name: str = "dense") -> DenseParams:
    if fan_in < 1 or fan_out < 1:
        raise DimensionError(f"{name}: layer dimensions must be positive, got {fan_in}x{fan_out}")
    rng = make_rng(rng_seed)
    return DenseParams(
        weights=Tensor(glorot_normal(fan_in, fan_out, rng), requires_grad=True, name=f"{name}.W"),
        bias=Tensor(np.zeros(fan_out), requires_grad=True, name=f"{name}.b"),
        activation=activation,
        name=name,
    )


def dense_forward(x, p: DenseParams) -> Tensor:
    """Apply ``activation(x @ W + b)`` independently at every leading index."""
    x = as_tensor(x)
    if x.shape[-1] != p.fan_in:
        raise DimensionError(
            f"{p.name}: expected feature dim {p.fan_in}, got input of shape {x.shape}"
        )
    return ACTIVATIONS[p.activation](add(matmul(x, p.weights), p.bias))


@dataclass
class LstmParams:
    """Gate blocks are stacked along the last axis in the order of ``GATES``."""

    input_weights: Tensor      # [F, 4H]
    recurrent_weights: Tensor  # [H, 4H]
    bias: Tensor               # [4H]
    name: str = "lstm"

    def __post_init__(self):
        f, h4 = self.input_weights.shape
        h = self.hidden_size
        if h4 != 4 * h or self.recurrent_weights.shape != (h, 4 * h) or self.bias.shape != (4 * h,):
            raise DimensionError(
                f"{self.name}: inconsistent gate shapes {self.input_weights.shape}, "
                f"{self.recurrent_weights.shape}, {self.bias.shape}"
            )

    @property
    def hidden_size(self) -> int:
        return self.recurrent_weights.shape[0]

    @property
    def input_size(self) -> int:
        return self.input_weights.shape[0]

    def parameters(self) -> list[Tensor]:
        return [self.input_weights, self.recurrent_weights, self.bias]


def lstm_init(input_size: int, hidden_size: int, rng_seed=0, name: str = "lstm") -> LstmParams:
    if input_size < 1 or hidden_size < 1:
        raise DimensionError(f"{name}: layer dimensions must be positive")
    rng = make_rng(rng_seed)
    wx = glorot_normal(input_size, 4 * hidden_size, rng)
    wh = glorot_normal(hidden_size, 4 * hidden_size, rng)
    return LstmParams(
        input_weights=Tensor(wx, requires_grad=True, name=f"{name}.Wx"),
        recurrent_weights=Tensor(wh, requires_grad=True, name=f"{name}.Wh"),
        bias=Tensor(np.zeros(4 * hidden_size), requires_grad=True, name=f"{name}.b"),
        name=name,
    )


def lstm_forward(x, p: LstmParams, initial_state=None):
    """Run the recurrence over axis 1 of ``x`` [B, T, F].

    Returns the hidden sequence [B, T, H] as a differentiable tensor and the
    final ``(h, c)`` pair as plain arrays. The initial state is treated as a
    constant.
    """
    x = as_tensor(x)
    if x.ndim != 3 or x.shape[-1] != p.input_size:
        raise DimensionError(
            f"{p.name}: expected input [B, T, {p.input_size}], got {x.shape}"
        )
    B, T, _ = x.shape
    H = p.hidden_size
    if initial_state is None:
        h = np.zeros((B, H))
        c = np.zeros((B, H))
    else:
        h, c = (np.asarray(s, dtype=np.float64) for s in initial_state)
        if h.shape != (B, H) or c.shape != (B, H):
            raise DimensionError(f"{p.name}: initial state must be [{B}, {H}]")
    wx, wh, b = p.input_weights.data, p.recurrent_weights.data, p.bias.data

    xw = x.data @ wx + b
    hs = np.empty((B, T, H))
    cache = []
    for t in range(T):
        z = xw[:, t] + h @ wh
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, t] = h
        cache.append((i, f, g, o, c_prev, h_prev, tc))

    def _bw(dhs):
        dwx = np.zeros_like(wx)
        dwh = np.zeros_like(wh)
        db = np.zeros_like(b)
        dx = np.zeros_like(x.data)
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            i, f, g, o, c_prev, h_prev, tc = cache[t]
            dh = dhs[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = np.concatenate(
                [dc * g * i * (1.0 - i),
                 dc * c_prev * f * (1.0 - f),
                 dc * i * (1.0 - g * g),
                 dh * tc * o * (1.0 - o)],
                axis=1,
            )
            dwx += x.data[:, t].T @ dz
            dwh += h_prev.T @ dz
            db += dz.sum(axis=0)
            dx[:, t] = dz @ wx.T
            dh_next = dz @ wh.T
            dc_next = dc * f
        if x.requires_grad:
            x._accumulate(dx)
        if p.input_weights.requires_grad:
            p.input_weights._accumulate(dwx)
        if p.recurrent_weights.requires_grad:
            p.recurrent_weights._accumulate(dwh)
        if p.bias.requires_grad:
            p.bias._accumulate(db)

    out = _result(hs, (x, p.input_weights, p.recurrent_weights, p.bias), _bw)
    return out, (h.copy(), c.copy())
