"""Zero-variance removal, min-max scaling, the even/odd split and windowing.

The order is fixed: drop_zero_variance -> scale_bundle -> windowize. Each
step checks the ``stage`` of its inputs and raises ``UsageError`` when called
out of turn.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import DataError, UsageError
from .dataset import MISSING, ScalerParams, SplitBundle, TimeSeriesDataset


def fit_scaler(train: TimeSeriesDataset) -> ScalerParams:
    if len(train) == 0:
        raise DataError(f"{train.name}: cannot fit a scaler on an empty dataset")
    return ScalerParams(train.values.min(axis=0), train.values.max(axis=0))


def apply_scaler(params: ScalerParams, ds: TimeSeriesDataset) -> TimeSeriesDataset:
    """Map each feature to ``(v - min) / (max - min)``; no clamping."""
    if ds.stage == "scaled":
        raise UsageError(f"{ds.name}: already scaled; scaling twice is not allowed")
    if params.minimum.shape != (ds.n_features,):
        raise DataError(f"{ds.name}: scaler fitted on {params.minimum.size} features, "
                        f"dataset has {ds.n_features}")
    span = params.maximum - params.minimum
    # zero-variance columns are normally dropped first; keep them finite anyway
    span = np.where(span == 0, 1.0, span)
    return ds.evolve(values=(ds.values - params.minimum) / span, stage="scaled")


def drop_zero_variance(bundle: SplitBundle) -> SplitBundle:
    """Remove features that are constant on the unsupervised training set."""
    for name, ds in bundle.datasets().items():
        if ds.stage != "raw":
            raise UsageError(f"drop_zero_variance must run before scaling ({name} is {ds.stage!r})")
    train = bundle.unsupervised_train
    constant = train.values.min(axis=0) == train.values.max(axis=0)
    if constant.all():
        raise DataError(f"{train.name}: every feature has zero variance")
    keep = np.flatnonzero(~constant)
    dropped = tuple(train.column_names[j] for j in np.flatnonzero(constant))

    def _reduce(ds):
        return ds.take_columns(keep).evolve(stage="reduced")

    return bundle.map(_reduce, dropped_features=bundle.dropped_features + dropped)


def scale_bundle(bundle: SplitBundle) -> SplitBundle:
    """Fit on the unsupervised training split and apply to every split."""
    for name, ds in bundle.datasets().items():
        if ds.stage != "reduced":
            raise UsageError(f"scale_bundle expects zero-variance features removed first "
                             f"({name} is {ds.stage!r})")
    params = fit_scaler(bundle.unsupervised_train)
    return bundle.map(lambda ds: apply_scaler(params, ds), scaler=params)


def preprocess(bundle: SplitBundle) -> SplitBundle:
    return scale_bundle(drop_zero_variance(bundle))


def even_odd_split_duplicate(mixed: TimeSeriesDataset) -> tuple[TimeSeriesDataset, TimeSeriesDataset]:
    """Return ``(supervised_train, test)``.

    Rows with even 0-based index go to the test half, odd rows to the
    supervised half; every row is then repeated twice in place so both
    halves regain (roughly) the original length at half the resolution.
    """
    if mixed.anomaly_labels is None:
        raise UsageError(f"{mixed.name}: even/odd split needs anomaly labels")
    n = len(mixed)
    even = np.repeat(np.arange(0, n, 2), 2)
    odd = np.repeat(np.arange(1, n, 2), 2)
    test = mixed.take_rows(even).evolve(name=f"{mixed.name}-test")
    supervised = mixed.take_rows(odd).evolve(name=f"{mixed.name}-supervised")
    return supervised, test


def make_bundle(unsupervised_train: TimeSeriesDataset, validation: TimeSeriesDataset,
                mixed: TimeSeriesDataset, **info) -> SplitBundle:
    for ds in (unsupervised_train, validation):
        if ds.anomaly_labels is not None and ds.anomaly_labels.any():
            raise DataError(f"{ds.name}: training and validation splits must be anomaly free")
    if not (unsupervised_train.column_names == validation.column_names == mixed.column_names):
        raise DataError("all splits must share the same feature columns")
    supervised, test = even_odd_split_duplicate(mixed)
    return SplitBundle(unsupervised_train, validation, supervised, test, mixed=mixed, info=info)


# -- windowing ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WindowBatch:
    """Non-overlapping windows ``x`` [B, T, F].

    ``window_labels`` and ``window_metadata`` use ``-1`` for "no label".
    ``spans`` holds the ``[start, stop)`` source rows of each window.
    """

    x: np.ndarray
    column_kinds: tuple[str, ...]
    window_labels: np.ndarray | None = None
    window_metadata: np.ndarray | None = None
    spans: np.ndarray | None = None
    n_categories: int = 3

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def window_size(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "WindowBatch":
        idx = np.asarray(idx, dtype=np.int64)
        pick = lambda a: None if a is None else a[idx]
        return replace(self, x=self.x[idx], window_labels=pick(self.window_labels),
                       window_metadata=pick(self.window_metadata), spans=pick(self.spans))

    def with_labels(self, labels=None, metadata=None) -> "WindowBatch":
        return replace(
            self,
            window_labels=self.window_labels if labels is None else np.asarray(labels, dtype=np.int64),
            window_metadata=self.window_metadata if metadata is None else np.asarray(metadata, dtype=np.int64),
        )

    @staticmethod
    def concat(batches) -> "WindowBatch":
        batches = list(batches)
        first = batches[0]

        def _cat(attr):
            parts = [getattr(b, attr) for b in batches]
            if all(p is None for p in parts):
                return None
            return np.concatenate([
                p if p is not None else np.full(len(b), MISSING, dtype=np.int64)
                for p, b in zip(parts, batches)
            ])

        spans = None
        if all(b.spans is not None for b in batches):
            spans = np.concatenate([b.spans for b in batches])
        return WindowBatch(
            x=np.concatenate([b.x for b in batches]),
            column_kinds=first.column_kinds,
            window_labels=_cat("window_labels"),
            window_metadata=_cat("window_metadata"),
            spans=spans,
            n_categories=first.n_categories,
        )


def _majority(ids: np.ndarray) -> int:
    ids = ids[ids != MISSING]
    if ids.size == 0:
        return MISSING
    counts: dict[int, int] = {}
    for v in ids.tolist():  # dict keeps first-seen order for the tie-break
        counts[v] = counts.get(v, 0) + 1
    best = max(counts.values())
    return next(k for k, c in counts.items() if c == best)


def windowize(ds: TimeSeriesDataset, window_size: int) -> WindowBatch:
    if ds.stage != "scaled":
        raise UsageError(f"{ds.name}: windowize runs after scaling (stage is {ds.stage!r})")
    if window_size < 1:
        raise DataError(f"window size must be >= 1, got {window_size}")
    n = len(ds)
    if window_size > n:
        raise DataError(f"{ds.name}: window size {window_size} exceeds {n} rows")
    b = n // window_size
    used = b * window_size
    x = ds.values[:used].reshape(b, window_size, ds.n_features)
    starts = np.arange(b) * window_size
    spans = np.stack([starts, starts + window_size], axis=1)
    labels = None
    if ds.anomaly_labels is not None:
        labels = ds.anomaly_labels[:used].reshape(b, window_size).max(axis=1)
    metadata = None
    if ds.metadata_labels is not None:
        blocks = ds.metadata_labels[:used].reshape(b, window_size)
        metadata = np.array([_majority(row) for row in blocks], dtype=np.int64)
    return WindowBatch(x=x, column_kinds=ds.column_kinds, window_labels=labels,
                       window_metadata=metadata, spans=spans,
                       n_categories=len(ds.metadata_categories))
