from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..baselines.pca import PcaModel, pca_reconstruct
from ..data.preprocessing import WindowBatch
from ..errors import UsageError
from .metrics import ThresholdRule


@dataclass
class ScoreSeries:
    """Per-window scores (higher = more anomalous) aligned with labels."""

    scores: np.ndarray
    ground_truth: np.ndarray | None = None
    decisions: np.ndarray | None = None
    threshold: float | None = None
    extras: dict | None = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.ground_truth is not None and len(self.ground_truth) != len(self.scores):
            raise UsageError("scores and ground truth must have equal lengths")

    def decide(self, rule: ThresholdRule) -> "ScoreSeries":
        return ScoreSeries(self.scores, self.ground_truth, rule.decide(self.scores),
                           rule.threshold, self.extras)


def deviation_score(model, windows: WindowBatch, n_samples: int = 10, seed=0) -> ScoreSeries:
    """The model's own reconstruction term per window, averaged over time and features."""
    if isinstance(model, PcaModel):
        b, t, f = windows.x.shape
        _, dev = pca_reconstruct(model, windows.x.reshape(b * t, f))
        return ScoreSeries(dev.reshape(b, t).mean(axis=1), windows.window_labels)
    if not hasattr(model, "score"):
        raise UsageError(f"{type(model).__name__} has no reconstruction score")
    out = model.score(windows.x, n_samples=n_samples, seed=seed)
    extras = {k: v for k, v in out.items() if k != "deviation"}
    return ScoreSeries(out["deviation"], windows.window_labels, extras=extras)
