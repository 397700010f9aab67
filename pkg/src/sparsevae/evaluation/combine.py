"""Combining deviation decisions with label-head and metadata predictions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from .metrics import PERCENTILES, MetricsReport, select_threshold, sweep_decisions


def combine_max(deviation_decision, label_decision) -> np.ndarray:
    """Anomalous if either prediction says so."""
    return np.maximum(np.asarray(deviation_decision, dtype=np.int64),
                      np.asarray(label_decision, dtype=np.int64))


def rescale_deviation(dev, threshold: float, dev_min: float, dev_max: float) -> np.ndarray:
    """Piecewise-linear map sending [min, threshold] to [0, 0.5] and (threshold, max] to (0.5, 1].

    Values outside [min, max] are clamped to 0 or 1.
    """
    dev = np.asarray(dev, dtype=np.float64)
    if dev_max == dev_min:
        return np.full(dev.shape, 0.5)
    if not dev_min <= threshold <= dev_max:
        raise ValueError(f"threshold {threshold} outside [{dev_min}, {dev_max}]")
    out = np.empty_like(dev)
    low = dev <= threshold
    if threshold > dev_min:
        out[low] = 0.5 * (dev[low] - dev_min) / (threshold - dev_min)
    else:
        out[low] = np.where(dev[low] == threshold, 0.5, 0.0)
    if dev_max > threshold:
        out[~low] = 0.5 + 0.5 * (dev[~low] - threshold) / (dev_max - threshold)
    else:
        out[~low] = 1.0
    return np.clip(out, 0.0, 1.0)


@dataclass
class CombinedScore:
    rescaled_deviation: np.ndarray
    pi_anomalous: np.ndarray
    metadata_measure: np.ndarray | None
    combined: np.ndarray
    decisions: np.ndarray


def combine_avg(rescaled_dev, pi_anomalous, extra=None) -> CombinedScore:
    """Mean of the present components; anomalous when strictly above 0.5."""
    parts = [np.asarray(rescaled_dev, dtype=np.float64), np.asarray(pi_anomalous, dtype=np.float64)]
    if extra is not None:
        parts.append(np.asarray(extra, dtype=np.float64))
    for p in parts:
        if np.any((p < 0) | (p > 1)):
            raise DataError("combined components must lie in [0, 1]")
    combined = np.mean(parts, axis=0)
    return CombinedScore(parts[0], parts[1], parts[2] if extra is not None else None,
                         combined, (combined > 0.5).astype(np.int64))


def barycentric_certainty(probs) -> np.ndarray:
    """Distance to the simplex centroid relative to a corner's distance."""
    p = np.asarray(probs, dtype=np.float64)
    squeeze = p.ndim == 1
    p = np.atleast_2d(p)
    k = p.shape[1]
    if k < 2:
        raise DataError("barycentric measure needs at least two categories")
    if np.any(p < -1e-12) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-6):
        raise DataError("barycentric measure needs probability vectors (nonnegative, summing to 1)")
    centroid = np.full(k, 1.0 / k)
    corner = np.eye(k)[0]
    c = np.linalg.norm(p - centroid, axis=1) / np.linalg.norm(corner - centroid)
    return c[0] if squeeze else c


def barycentric_measure(probs) -> np.ndarray:
    """1 at the centroid (no category preferred), 0 at any corner."""
    return 1.0 - barycentric_certainty(probs)


BOUNDS = ("validation", "validation+test")


def _bounds(validation_dev, test_dev, threshold, how):
    lo = min(float(np.min(validation_dev)), threshold)
    hi = max(float(np.max(validation_dev)), threshold)
    if how == "validation+test":
        lo = min(lo, float(np.min(test_dev)))
        hi = max(hi, float(np.max(test_dev)))
    return lo, hi


def sweep_combined(validation_dev, test_dev, pi_anomalous, ground_truth, mode: str = "avg",
                   metadata_measure=None, validation_percentile=99,
                   bounds: str = "validation") -> MetricsReport:
    """Percentile sweep for the Max / Avg combinations.

    For every percentile the deviation threshold comes from the validation
    deviations. Rescaling bounds are the validation range by default, so a
    test window's rescaled value does not depend on the other test windows;
    deviations beyond the range clamp to 0 or 1. ``bounds="validation+test"``
    widens the range by the observed test extremes instead.
    """
    if mode not in ("avg", "max"):
        raise ValueError(f"mode must be 'avg' or 'max', got {mode!r}")
    if bounds not in BOUNDS:
        raise ValueError(f"bounds must be one of {BOUNDS}, got {bounds!r}")
    test_dev = np.asarray(test_dev, dtype=np.float64)
    pi_anomalous = np.asarray(pi_anomalous, dtype=np.float64)
    label_decision = (pi_anomalous > 0.5).astype(np.int64)
    decision_sets, labels = [], []
    for p in PERCENTILES:
        rule = select_threshold(validation_dev, p)
        if mode == "max":
            decisions = combine_max(rule.decide(test_dev), label_decision)
        else:
            lo, hi = _bounds(validation_dev, test_dev, rule.threshold, bounds)
            rescaled = rescale_deviation(test_dev, rule.threshold, lo, hi)
            decisions = combine_avg(rescaled, pi_anomalous, metadata_measure).decisions
        decision_sets.append(decisions)
        labels.append({"percentile": p, "threshold": rule.threshold})
    return sweep_decisions(decision_sets, ground_truth, labels, validation_percentile)
