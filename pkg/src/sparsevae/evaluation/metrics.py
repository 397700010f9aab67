"""Thresholds, confusion counts, percentile sweeps and AUC."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from ..errors import UsageError

PERCENTILES = tuple(range(101))
METRIC_NAMES = ("accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class ThresholdRule:
    percentile: float
    threshold: float
    source: str = "validation"

    def decide(self, scores) -> np.ndarray:
        return (np.asarray(scores) > self.threshold).astype(np.int64)


def select_threshold(validation_scores, percentile: float) -> ThresholdRule:
    """Percentile of the validation scores, linear between order statistics."""
    v = np.asarray(validation_scores, dtype=np.float64).ravel()
    if v.size == 0:
        raise UsageError("threshold selection needs at least one validation score")
    if not 0 <= percentile <= 100:
        raise UsageError(f"percentile must be in [0, 100], got {percentile}")
    return ThresholdRule(percentile, float(np.percentile(v, percentile, method="linear")))


def confusion_counts(decisions, truth) -> tuple[int, int, int, int]:
    d = np.asarray(decisions).astype(bool)
    y = np.asarray(truth).astype(bool)
    if d.shape != y.shape:
        raise UsageError(f"{d.shape[0]} decisions for {y.shape[0]} labels")
    tp = int(np.sum(d & y))
    fp = int(np.sum(d & ~y))
    tn = int(np.sum(~d & ~y))
    fn = int(np.sum(~d & y))
    return tp, fp, tn, fn


def confusion_metrics(tp: int, fp: int, tn: int, fn: int) -> dict[str, float]:
    """Accuracy, precision, recall and f1; a zero denominator gives 0."""
    total = tp + fp + tn + fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    return {
        "accuracy": (tp + tn) / total if total else 0.0,
        "precision": precision,
        "recall": recall,
        "f1": f1,
    }


def truncate2(x: float) -> float:
    """Cut after two decimals (0.8799 -> 0.87); guards against 0.29 == 0.2899999."""
    if x != x:
        return x
    return math.floor(x * 100 + 1e-9) / 100


def auc_from_points(fpr, tpr) -> float:
    """Trapezoidal area under the operating points plus (0,0) and (1,1)."""
    pts = sorted(set(zip(map(float, fpr), map(float, tpr))) | {(0.0, 0.0), (1.0, 1.0)})
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def rank_auc(scores, truth) -> float:
    """Probability that a random anomaly outscores a random normal (ties count half)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(truth).astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class MetricsReport:
    """Confusion counts and metrics per operating point plus the selection.

    ``rows`` has one entry per operating point (101 percentiles for a sweep,
    a single row for classifiers). ``selected`` is the row with the highest
    f1 cut after two decimals, lowest percentile among ties.
    """

    rows: list[dict]
    auc: float
    selected_index: int
    degenerate: bool = False
    kind: str = "sweep"
    validation_selected: dict | None = None
    extra: dict = field(default_factory=dict)

    @property
    def selected(self) -> dict:
        return self.rows[self.selected_index]

    @property
    def selected_percentile(self):
        return self.selected.get("percentile")

    @property
    def best_f1(self) -> float:
        return self.selected["f1"]

    def roc_points(self) -> list[tuple[float, float]]:
        return [(r["fpr"], r["tpr"]) for r in self.rows]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "auc": None if self.auc != self.auc else self.auc,
            "degenerate": self.degenerate,
            "selected_index": self.selected_index,
            "selected": self.selected,
            "validation_selected": self.validation_selected,
            "rows": self.rows,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricsReport":
        auc = doc["auc"]
        return cls(rows=doc["rows"], auc=float("nan") if auc is None else auc,
                   selected_index=doc["selected_index"], degenerate=doc["degenerate"],
                   kind=doc["kind"], validation_selected=doc.get("validation_selected"),
                   extra=doc.get("extra", {}))


def _row(decisions, truth, **fields) -> dict:
    tp, fp, tn, fn = confusion_counts(decisions, truth)
    row = dict(fields)
    row.update(tp=tp, fp=fp, tn=tn, fn=fn)
    row.update(confusion_metrics(tp, fp, tn, fn))
    row["tpr"] = tp / (tp + fn) if tp + fn else 0.0
    row["fpr"] = fp / (fp + tn) if fp + tn else 0.0
    return row


def _select(rows) -> int:
    best, best_key = 0, None
    for i, r in enumerate(rows):
        key = truncate2(r["f1"])
        if best_key is None or key > best_key:
            best, best_key = i, key
    return best


def sweep_decisions(decision_sets, truth, labels: list[dict],
                    validation_percentile: float | None = None) -> MetricsReport:
    """Evaluate one decision vector per operating point.

    ``labels[i]`` is merged into row i (percentile, threshold...). AUC is
    taken over all operating points.
    """
    truth = np.asarray(truth).astype(np.int64)
    rows = [_row(d, truth, **lab) for d, lab in zip(decision_sets, labels)]
    degenerate = truth.min() == truth.max() if truth.size else True
    auc = float("nan") if degenerate else auc_from_points([r["fpr"] for r in rows],
                                                          [r["tpr"] for r in rows])
    report = MetricsReport(rows=rows, auc=auc, selected_index=_select(rows), degenerate=bool(degenerate))
    if validation_percentile is not None:
        for r in rows:
            if r.get("percentile") == validation_percentile:
                report.validation_selected = r
                break
    return report


def sweep_percentiles(test_scores, ground_truth, validation_scores,
                      validation_percentile: float | None = 99) -> MetricsReport:
    """Threshold at every integer percentile 0..100 of the validation scores."""
    test_scores = np.asarray(test_scores, dtype=np.float64)
    if test_scores.shape != np.shape(ground_truth):
        raise UsageError("scores and labels must be aligned")
    rules = [select_threshold(validation_scores, p) for p in PERCENTILES]
    return sweep_decisions(
        [rule.decide(test_scores) for rule in rules],
        ground_truth,
        [{"percentile": rule.percentile, "threshold": rule.threshold} for rule in rules],
        validation_percentile,
    )


def single_point_report(decisions, ground_truth, scores=None) -> MetricsReport:
    """Classifier-style evaluation at one operating point.

    AUC comes from the continuous score when there is one, otherwise from
    the single (FPR, TPR) point joined to (0,0) and (1,1).
    """
    report = sweep_decisions([decisions], ground_truth, [{"percentile": None}])
    report.kind = "single"
    if scores is not None and not report.degenerate:
        report.auc = rank_auc(scores, ground_truth)
    return report


def best_report_index(reports) -> int:
    """Highest two-decimal f1, then highest AUC, then earliest."""
    best, best_key = None, None
    for i, rep in enumerate(reports):
        if rep is None:
            continue
        auc = rep.auc if rep.auc == rep.auc else -1.0
        key = (truncate2(rep.best_f1), auc)
        if best_key is None or key > best_key:
            best, best_key = i, key
    return best
