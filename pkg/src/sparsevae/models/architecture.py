from __future__ import annotations

from dataclasses import asdict, dataclass, field

from ..errors import ConfigError

VARIANTS = ("err", "prob", "sl", "md")


@dataclass
class VaeArchitecture:
    """Layer widths of a symmetric LSTM VAE.

    The encoder runs ``2F -> td_dense_layers -> lstm_layers -> bottleneck``
    and the decoder mirrors it. Widths may not grow toward the bottleneck,
    and the bottleneck is the narrowest layer.
    """

    input_width: int
    bottleneck_width: int = 4
    td_dense_layers: list[int] = field(default_factory=list)
    lstm_layers: list[int] = field(default_factory=lambda: [12])
    window_size: int = 10
    batch_size: int = 32
    epochs: int = 30
    n_categories: int = 3

    def __post_init__(self):
        self.td_dense_layers = list(self.td_dense_layers)
        self.lstm_layers = list(self.lstm_layers)
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    @property
    def first_hidden(self) -> int:
        return 2 * self.input_width

    @property
    def encoder_widths(self) -> list[int]:
        return [self.first_hidden, *self.td_dense_layers, *self.lstm_layers]

    def problems(self) -> list[str]:
        out = []
        if self.input_width < 1:
            out.append(f"input_width must be >= 1, got {self.input_width}")
        if len(self.td_dense_layers) > 3:
            out.append("at most three time-distributed dense layers per side")
        if len(self.lstm_layers) > 3:
            out.append("at most three LSTM layers around the bottleneck")
        widths = self.encoder_widths
        if any(w < 1 for w in widths + [self.bottleneck_width]):
            out.append("layer widths must be positive")
        for a, b in zip(widths, widths[1:]):
            if b > a:
                out.append(f"layer widths must not grow toward the bottleneck ({a} -> {b})")
                break
        if self.bottleneck_width > min(widths):
            out.append(f"bottleneck width {self.bottleneck_width} exceeds the narrowest hidden layer")
        for name in ("window_size", "batch_size"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1")
        if self.epochs < 0:
            out.append("epochs must be >= 0")
        return out

    def to_dict(self) -> dict:
        return asdict(self)
