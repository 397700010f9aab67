from __future__ import annotations

import numpy as np
from scipy import stats as sps

from ..errors import UsageError


def friedman_test(score_matrix) -> tuple[float, float]:
    """Friedman chi-square over a models x datasets matrix.

    Models are ranked within each dataset (average ranks for ties) and the
    statistic carries the usual tie correction. Returns ``(statistic, p)``.
    """
    m = np.asarray(score_matrix, dtype=np.float64)
    if m.ndim != 2:
        raise UsageError("friedman_test expects a 2-D models x datasets matrix")
    k, n = m.shape
    if k < 3 or n < 2:
        raise UsageError(f"friedman_test needs >= 3 models and >= 2 datasets, got {k} x {n}")
    ranks = np.column_stack([sps.rankdata(m[:, j]) for j in range(n)])
    rank_sums = ranks.sum(axis=1)
    stat = 12.0 / (n * k * (k + 1)) * np.sum(rank_sums ** 2) - 3.0 * n * (k + 1)
    ties = 0.0
    for j in range(n):
        _, counts = np.unique(m[:, j], return_counts=True)
        ties += np.sum(counts ** 3 - counts)
    denom = 1.0 - ties / (n * k * (k * k - 1))
    if denom <= 0:
        return 0.0, 1.0
    stat = max(stat / denom, 0.0)
    return float(stat), float(sps.chi2.sf(stat, k - 1))


def two_sample_ttest(a, b) -> tuple[float, float]:
    """Welch's unequal-variance t-test, two-sided."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise UsageError("each sample needs at least two values")
    diff = a.mean() - b.mean()
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = va + vb
    if se2 == 0:
        if diff == 0:
            return 0.0, 1.0
        return float(np.copysign(np.inf, diff)), 0.0
    t = diff / np.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    return float(t), float(2.0 * sps.t.sf(abs(t), df))
