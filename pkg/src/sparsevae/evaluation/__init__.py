from .combine import (
    CombinedScore,
    barycentric_certainty,
    barycentric_measure,
    combine_avg,
    combine_max,
    rescale_deviation,
    sweep_combined,
)
from .metrics import (
    MetricsReport,
    ThresholdRule,
    auc_from_points,
    best_report_index,
    confusion_counts,
    confusion_metrics,
    rank_auc,
    select_threshold,
    single_point_report,
    sweep_decisions,
    sweep_percentiles,
    truncate2,
)
from .scoring import ScoreSeries, deviation_score
from .stats import friedman_test, two_sample_ttest

__all__ = [
    "CombinedScore",
    "MetricsReport",
    "ScoreSeries",
    "ThresholdRule",
    "auc_from_points",
    "barycentric_certainty",
    "barycentric_measure",
    "best_report_index",
    "combine_avg",
    "combine_max",
    "confusion_counts",
    "confusion_metrics",
    "deviation_score",
    "friedman_test",
    "rank_auc",
    "rescale_deviation",
    "select_threshold",
    "single_point_report",
    "sweep_combined",
    "sweep_decisions",
    "sweep_percentiles",
    "truncate2",
    "two_sample_ttest",
]
