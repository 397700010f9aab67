"""Isolation Forest with array-backed trees and a seeded random search."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..nn.layers import make_rng

EULER_GAMMA = 0.5772156649015329
ESTIMATOR_RANGE = (50, 400)
CONTAMINATION_RANGE = (0.0, 0.8)


def harmonic(n: int) -> float:
    return float(sum(1.0 / i for i in range(1, n + 1)))


def average_path_length(n) -> np.ndarray:
    """c(n) = 2 H(n-1) - 2 (n-1) / n, with c(1) = 0.

    Exact harmonic numbers for n < 1000, the log approximation above.
    """
    n = np.asarray(n, dtype=np.int64)
    out = np.zeros(n.shape, dtype=np.float64)
    for val in np.unique(n):
        if val <= 1:
            continue
        h = harmonic(val - 1) if val < 1000 else math.log(val - 1) + EULER_GAMMA
        out[n == val] = 2.0 * h - 2.0 * (val - 1) / val
    return out


@dataclass
class IsolationTree:
    feature: np.ndarray    # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray       # samples that reached each node
    depth: np.ndarray

    @property
    def height(self) -> int:
        return int(self.depth.max())

    def path_length(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] < self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return self.depth[node] + average_path_length(self.size[node])


def _build_tree(X: np.ndarray, height_limit: int, rng) -> IsolationTree:
    feature, threshold, left, right, size, depth = [], [], [], [], [], []

    def new_node(n, d):
        for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (size, n), (depth, d)):
            lst.append(v)
        return len(feature) - 1

    root = new_node(len(X), 0)
    stack = [(root, np.arange(len(X)), 0)]
    while stack:
        node, rows, d = stack.pop()
        if d >= height_limit or len(rows) <= 1:
            continue
        sub = X[rows]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        candidates = np.flatnonzero(hi > lo)
        if candidates.size == 0:
            continue
        q = int(rng.choice(candidates))
        p = rng.uniform(lo[q], hi[q])
        mask = sub[:, q] < p
        feature[node], threshold[node] = q, p
        l_rows, r_rows = rows[mask], rows[~mask]
        left[node] = new_node(len(l_rows), d + 1)
        right[node] = new_node(len(r_rows), d + 1)
        stack.append((left[node], l_rows, d + 1))
        stack.append((right[node], r_rows, d + 1))
    as_i = lambda a: np.asarray(a, dtype=np.int64)
    return IsolationTree(as_i(feature), np.asarray(threshold, dtype=np.float64),
                         as_i(left), as_i(right), as_i(size), as_i(depth))


@dataclass
class IsoForestModel:
    n_estimators: int
    contamination: float
    subsample_size: int
    trees: list[IsolationTree] = field(default_factory=list)
    threshold: float = 0.5
    seed: int = 0

    def score(self, X) -> np.ndarray:
        return isoforest_score(self, X)

    def predict(self, X) -> np.ndarray:
        return (self.score(X) > self.threshold).astype(np.int64)

    @property
    def params(self) -> dict:
        return {"n_estimators": self.n_estimators, "contamination": self.contamination}


def _check_params(n_estimators, contamination):
    problems = []
    lo, hi = ESTIMATOR_RANGE
    if not lo <= n_estimators <= hi:
        problems.append(f"n_estimators must be in [{lo}, {hi}], got {n_estimators}")
    c_lo, c_hi = CONTAMINATION_RANGE
    if not c_lo < contamination <= c_hi:
        problems.append(f"contamination must be in ({c_lo}, {c_hi}], got {contamination}")
    if problems:
        raise ConfigError(problems)


def isoforest_fit(X, n_estimators: int = 100, contamination: float = 0.1, seed=0,
                  subsample_size: int = 256) -> IsoForestModel:
    _check_params(n_estimators, contamination)
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    psi = min(subsample_size, n)
    height_limit = math.ceil(math.log2(psi)) if psi > 1 else 0
    rng = make_rng(seed)
    trees = []
    for _ in range(n_estimators):
        rows = rng.choice(n, size=psi, replace=False)
        trees.append(_build_tree(X[rows], height_limit, rng))
    model = IsoForestModel(n_estimators, contamination, psi, trees, seed=seed if isinstance(seed, int) else 0)
    train_scores = isoforest_score(model, X)
    # the top `contamination` share of training scores lies above the threshold
    model.threshold = float(np.quantile(train_scores, 1.0 - contamination))
    return model


def isoforest_score(model: IsoForestModel, X) -> np.ndarray:
    """s(x) = 2 ** (-E[h(x)] / c(psi)); 0.5 for every point when psi == 1."""
    X = np.asarray(X, dtype=np.float64)
    mean_path = np.mean([t.path_length(X) for t in model.trees], axis=0)
    c = float(average_path_length(model.subsample_size))
    if c == 0.0:
        return np.full(X.shape[0], 0.5)
    return 2.0 ** (-mean_path / c)


def isoforest_random_search(X_train, X_eval, y_eval, tries: int = 100, seed=0,
                            evaluate=None) -> tuple[IsoForestModel, list[dict]]:
    """Sample (n_estimators, contamination) ``tries`` times; keep the best.

    ``evaluate(model, X_eval, y_eval)`` returns ``(f1, auc)``; the best trial
    maximizes f1 truncated to two decimals, then AUC, then the earliest try.
    Returns the best model and the list of all trials.
    """
    if tries < 1:
        raise ConfigError("tries must be >= 1")
    if evaluate is None:
        from ..evaluation.metrics import single_point_report

        def evaluate(model, X, y):
            rep = single_point_report(model.predict(X), y, model.score(X))
            return rep.selected["f1"], rep.auc

    rng = make_rng(seed)
    trials = []
    best, best_key = None, None
    for i in range(tries):
        n_est = int(rng.integers(ESTIMATOR_RANGE[0], ESTIMATOR_RANGE[1] + 1))
        # reflected draw covers (0, 0.8] rather than [0, 0.8)
        contamination = float(CONTAMINATION_RANGE[1] - rng.uniform(0.0, CONTAMINATION_RANGE[1]))
        model = isoforest_fit(X_train, n_est, contamination, seed=int(rng.integers(2**31)))
        f1, auc = evaluate(model, X_eval, y_eval)
        trials.append({"try": i, "n_estimators": n_est, "contamination": contamination,
                       "f1": f1, "auc": auc})
        key = (math.floor(f1 * 100 + 1e-9), auc if auc == auc else -1.0)
        if best_key is None or key > best_key:
            best, best_key = model, key
    return best, trials
