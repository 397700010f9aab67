"""Synthetic production-process data with injected anomalies.

One long process is simulated and cut into the anomaly-free training and
validation parts and a labeled mixed part. The process cycles through the
statuses production / equip / rest; continuous channels are sums of
sinusoids whose amplitude and offset depend on the status, binary channels
follow periodic duty cycles while producing.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..nn.layers import make_rng
from .dataset import BINARY, CONTINUOUS, DEFAULT_STATUS, SCHEMA_VERSION, TimeSeriesDataset
from .preprocessing import make_bundle

ANOMALY_STYLES = ("feature-noise-injection", "amplitude-shift", "stuck-binary")

# status -> (amplitude, offset); rows spent per status in one cycle
_STATUS_SHAPE = {0: (1.0, 0.0), 1: (0.5, 0.8), 2: (0.15, -0.8)}


@dataclass
class SynthConfig:
    n_train: int = 8000
    n_validation: int = 1000
    n_mixed: int = 2400
    n_continuous: int = 8
    n_binary: int = 2
    anomaly_fraction: float = 0.15
    anomaly_style: str = "feature-noise-injection"
    segment_length: tuple[int, int] = (30, 70)
    anomaly_channels: int = 4
    anomaly_strength: float = 1.5
    noise_std: float = 0.05
    status_lengths: tuple[int, int, int] = (240, 60, 60)
    periods: tuple[int, ...] = (8, 12, 20, 30, 45, 60)
    name: str = "synthetic"

    def validate(self) -> "SynthConfig":
        problems = []
        if not 0.0 < self.anomaly_fraction < 1.0:
            problems.append(f"anomaly_fraction must lie in (0, 1), got {self.anomaly_fraction}")
        if self.anomaly_style not in ANOMALY_STYLES:
            problems.append(f"anomaly_style must be one of {ANOMALY_STYLES}, got {self.anomaly_style!r}")
        if self.anomaly_style == "stuck-binary" and self.n_binary < 1:
            problems.append("stuck-binary anomalies need n_binary >= 1")
        if self.anomaly_style != "stuck-binary" and self.n_continuous < 1:
            problems.append(f"{self.anomaly_style} anomalies need n_continuous >= 1")
        if min(self.n_train, self.n_validation, self.n_mixed) < 2:
            problems.append("every split needs at least 2 rows")
        lo, hi = self.segment_length
        if not 1 <= lo <= hi:
            problems.append(f"segment_length must satisfy 1 <= lo <= hi, got {self.segment_length}")
        if self.n_continuous + self.n_binary < 1:
            problems.append("at least one feature is required")
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["schema_version"] = SCHEMA_VERSION
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthConfig":
        doc = dict(doc)
        doc.pop("schema_version", None)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError([f"unknown synthetic config field {k!r}" for k in sorted(unknown)])
        for key in ("segment_length", "status_lengths", "periods"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc).validate()

    @classmethod
    def load(cls, path) -> "SynthConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _status_sequence(n: int, lengths, rng) -> np.ndarray:
    out = np.empty(n, dtype=np.int64)
    pos, status = 0, 0
    while pos < n:
        base = lengths[status]
        run = max(1, int(round(base * rng.uniform(0.8, 1.2))))
        out[pos:pos + run] = status
        pos += run
        status = (status + 1) % 3
    return out


def _simulate(cfg: SynthConfig, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    status = _status_sequence(n, cfg.status_lengths, rng)
    t = np.arange(n, dtype=np.float64)
    amp = np.array([_STATUS_SHAPE[s][0] for s in range(3)])[status]
    off = np.array([_STATUS_SHAPE[s][1] for s in range(3)])[status]
    cont = np.empty((n, cfg.n_continuous))
    for j in range(cfg.n_continuous):
        p1, p2 = rng.choice(cfg.periods, size=2, replace=False)
        ph1, ph2 = rng.uniform(0, 2 * np.pi, size=2)
        w2 = rng.uniform(0.2, 0.6)
        gain = rng.uniform(0.7, 1.3)
        wave = np.sin(2 * np.pi * t / p1 + ph1) + w2 * np.sin(2 * np.pi * t / p2 + ph2)
        cont[:, j] = gain * (amp * wave + off) + rng.normal(0.0, cfg.noise_std, size=n)
    binary = np.zeros((n, cfg.n_binary))
    for j in range(cfg.n_binary):
        period = int(rng.choice(cfg.periods))
        duty = rng.uniform(0.3, 0.7)
        phase = int(rng.integers(period))
        on = ((t + phase) % period) < duty * period
        # valves only switch while producing; equip holds them open
        binary[:, j] = np.where(status == 0, on, status == 1).astype(np.float64)
    return np.concatenate([cont, binary], axis=1), status


def _segments(n: int, n_anomalous: int, lengths, rng) -> list[tuple[int, int]]:
    lo, hi = lengths
    sizes = []
    while sum(sizes) < n_anomalous:
        sizes.append(int(rng.integers(lo, hi + 1)))
    sizes[-1] -= sum(sizes) - n_anomalous
    if sizes[-1] <= 0:
        sizes.pop()
    k = len(sizes)
    free = n - n_anomalous - (k - 1)
    if free < 0:
        raise ConfigError(f"cannot place {n_anomalous} anomalous rows in {n} rows")
    gaps = rng.multinomial(free, np.full(k + 1, 1.0 / (k + 1)))
    gaps[1:k] += 1
    out, pos = [], 0
    for size, gap in zip(sizes, gaps):
        pos += int(gap)
        out.append((pos, pos + size))
        pos += size
    return out


def _inject(values, segments, cfg: SynthConfig, rng) -> list[dict]:
    n_cont = cfg.n_continuous
    scale = values[:, :n_cont].std(axis=0) if n_cont else np.zeros(0)
    records = []
    for start, stop in segments:
        if cfg.anomaly_style == "stuck-binary":
            ch = int(rng.integers(cfg.n_binary))
            level = float(rng.integers(2))
            values[start:stop, n_cont + ch] = level
            records.append({"start": start, "stop": stop, "channels": [n_cont + ch]})
            continue
        k = min(cfg.anomaly_channels, n_cont)
        chans = np.sort(rng.choice(n_cont, size=k, replace=False))
        for ch in chans:
            if cfg.anomaly_style == "feature-noise-injection":
                noise = rng.normal(0.0, cfg.anomaly_strength * scale[ch], size=stop - start)
                values[start:stop, ch] += noise
            else:
                sign = 1.0 if rng.uniform() < 0.5 else -1.0
                values[start:stop, ch] += sign * cfg.anomaly_strength * scale[ch]
        records.append({"start": start, "stop": stop, "channels": chans.tolist()})
    return records


def synth_generate(config: SynthConfig | None = None, seed: int = 0):
    """Return a raw (unscaled) ``SplitBundle`` built from one simulated process."""
    cfg = (config or SynthConfig()).validate()
    rng = make_rng(np.random.SeedSequence(seed))
    total = cfg.n_train + cfg.n_validation + cfg.n_mixed
    values, status = _simulate(cfg, total, rng)

    a, b = cfg.n_train, cfg.n_train + cfg.n_validation
    mixed_values = values[b:].copy()
    n_anomalous = int(round(cfg.anomaly_fraction * cfg.n_mixed))
    segments = _segments(cfg.n_mixed, n_anomalous, cfg.segment_length, rng)
    records = _inject(mixed_values, segments, cfg, rng)
    labels = np.zeros(cfg.n_mixed, dtype=np.int64)
    for s, e in segments:
        labels[s:e] = 1

    names = tuple([f"cont_{j}" for j in range(cfg.n_continuous)]
                  + [f"bin_{j}" for j in range(cfg.n_binary)])
    kinds = tuple([CONTINUOUS] * cfg.n_continuous + [BINARY] * cfg.n_binary)

    def _ds(vals, stat, name, lab):
        return TimeSeriesDataset(values=vals, column_names=names, column_kinds=kinds,
                                 anomaly_labels=lab, metadata_labels=stat,
                                 metadata_categories=DEFAULT_STATUS, name=name)

    zeros = lambda n: np.zeros(n, dtype=np.int64)
    train = _ds(values[:a], status[:a], f"{cfg.name}-train", zeros(a))
    validation = _ds(values[a:b], status[a:b], f"{cfg.name}-validation", zeros(b - a))
    mixed = _ds(mixed_values, status[b:], f"{cfg.name}-mixed", labels)
    return make_bundle(train, validation, mixed, seed=seed, synth_config=cfg.to_dict(),
                       anomaly_segments=records)
