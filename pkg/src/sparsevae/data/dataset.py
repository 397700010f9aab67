"""Dataset containers and CSV ingestion."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import DataError, IngestionError

CONTINUOUS = "continuous"
BINARY = "binary"
COLUMN_KINDS = (CONTINUOUS, BINARY)
DEFAULT_STATUS = ("production", "equip", "rest")
MISSING = -1
SCHEMA_VERSION = 1

# Stages a dataset passes through; the preprocessing functions check them.
STAGES = ("raw", "reduced", "scaled")


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    values: np.ndarray
    column_names: tuple[str, ...]
    column_kinds: tuple[str, ...]
    anomaly_labels: np.ndarray | None = None
    metadata_labels: np.ndarray | None = None
    metadata_categories: tuple[str, ...] = DEFAULT_STATUS
    name: str = "dataset"
    stage: str = "raw"
    row_index: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError(f"{self.name}: values must be a 2-D matrix, got shape {values.shape}")
        object.__setattr__(self, "values", values)
        n, f = values.shape
        if len(self.column_names) != f or len(self.column_kinds) != f:
            raise DataError(f"{self.name}: {f} columns but {len(self.column_names)} names "
                            f"and {len(self.column_kinds)} kinds")
        for j, kind in enumerate(self.column_kinds):
            if kind not in COLUMN_KINDS:
                raise DataError(f"{self.name}: column {self.column_names[j]!r} has unknown kind {kind!r}")
            if kind == BINARY:
                bad = ~np.isin(values[:, j], (0.0, 1.0))
                if bad.any():
                    row = int(np.argmax(bad))
                    raise DataError(f"{self.name}: binary column {self.column_names[j]!r} holds "
                                    f"{values[row, j]!r} at row {row}")
        if self.stage not in STAGES:
            raise DataError(f"unknown stage {self.stage!r}")
        for attr in ("anomaly_labels", "metadata_labels", "row_index"):
            arr = getattr(self, attr)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=np.int64)
            if arr.shape != (n,):
                raise DataError(f"{self.name}: {attr} has shape {arr.shape}, expected ({n},)")
            object.__setattr__(self, attr, arr)
        if self.anomaly_labels is not None and not np.isin(self.anomaly_labels, (0, 1)).all():
            raise DataError(f"{self.name}: anomaly labels must be 0 or 1")
        if self.metadata_labels is not None:
            k = len(self.metadata_categories)
            ok = (self.metadata_labels == MISSING) | ((self.metadata_labels >= 0) & (self.metadata_labels < k))
            if not ok.all():
                raise DataError(f"{self.name}: metadata ids must be in [0, {k}) or {MISSING}")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def evolve(self, **changes) -> "TimeSeriesDataset":
        return replace(self, **changes)

    def take_rows(self, rows) -> "TimeSeriesDataset":
        rows = np.asarray(rows, dtype=np.int64)
        pick = lambda a: None if a is None else a[rows]
        base = self.row_index if self.row_index is not None else np.arange(len(self))
        return self.evolve(
            values=self.values[rows],
            anomaly_labels=pick(self.anomaly_labels),
            metadata_labels=pick(self.metadata_labels),
            row_index=base[rows],
        )

    def take_columns(self, keep: Sequence[int]) -> "TimeSeriesDataset":
        keep = list(keep)
        return self.evolve(
            values=self.values[:, keep],
            column_names=tuple(self.column_names[j] for j in keep),
            column_kinds=tuple(self.column_kinds[j] for j in keep),
        )


@dataclass(frozen=True)
class ScalerParams:
    minimum: np.ndarray
    maximum: np.ndarray

    @property
    def zero_variance(self) -> np.ndarray:
        return self.maximum == self.minimum

    def to_dict(self) -> dict:
        return {"min": self.minimum.tolist(), "max": self.maximum.tolist()}


@dataclass(frozen=True, eq=False)
class SplitBundle:
    unsupervised_train: TimeSeriesDataset
    validation: TimeSeriesDataset
    supervised_train: TimeSeriesDataset
    test: TimeSeriesDataset
    mixed: TimeSeriesDataset | None = None
    scaler: ScalerParams | None = None
    dropped_features: tuple[str, ...] = ()
    info: dict = field(default_factory=dict)

    SPLITS = ("unsupervised_train", "validation", "supervised_train", "test", "mixed")

    def datasets(self) -> dict[str, TimeSeriesDataset]:
        out = {name: getattr(self, name) for name in self.SPLITS}
        return {k: v for k, v in out.items() if v is not None}

    def map(self, fn, **changes) -> "SplitBundle":
        updated = {name: fn(ds) for name, ds in self.datasets().items()}
        return replace(self, **updated, **changes)

    def manifest(self) -> dict:
        """Everything needed to rebuild the splits exactly."""
        doc = {
            "schema_version": SCHEMA_VERSION,
            "dropped_features": list(self.dropped_features),
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
            "splits": {},
        }
        for name, ds in self.datasets().items():
            doc["splits"][name] = {
                "rows": len(ds),
                "features": list(ds.column_names),
                "anomalous_rows": None if ds.anomaly_labels is None else int(ds.anomaly_labels.sum()),
                "row_index": None if ds.row_index is None else ds.row_index.tolist(),
            }
        doc.update(self.info)
        return doc


# -- CSV ingestion ------------------------------------------------------------

def read_schema(schema) -> dict:
    """Accept a schema dict or the path of a JSON sidecar file."""
    if isinstance(schema, (str, Path)):
        schema = json.loads(Path(schema).read_text(encoding="utf-8"))
    if "columns" not in schema:
        raise IngestionError("schema has no 'columns' entry")
    return schema


def schema_for(ds: TimeSeriesDataset, label_column="anomaly", metadata_column="status",
               decimals: int | None = None) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "columns": [{"name": n, "kind": k} for n, k in zip(ds.column_names, ds.column_kinds)],
        "label_column": label_column if ds.anomaly_labels is not None else None,
        "metadata_column": metadata_column if ds.metadata_labels is not None else None,
        "metadata_categories": list(ds.metadata_categories),
    }
    if decimals is not None:
        doc["decimals"] = decimals
    return doc


def _fmt(v: float, decimals: int | None) -> str:
    if decimals is None:
        return repr(float(v))
    return f"{v:.{decimals}f}"


def write_csv(ds: TimeSeriesDataset, path, decimals: int | None = None,
              label_column: str = "anomaly", metadata_column: str = "status") -> dict:
    """Write ``ds`` as CSV and return the matching schema dict."""
    schema = schema_for(ds, label_column, metadata_column, decimals)
    header = list(ds.column_names)
    if ds.anomaly_labels is not None:
        header.append(label_column)
    if ds.metadata_labels is not None:
        header.append(metadata_column)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(ds)):
            row = [_fmt(v, decimals) for v in ds.values[i]]
            if ds.anomaly_labels is not None:
                row.append(str(int(ds.anomaly_labels[i])))
            if ds.metadata_labels is not None:
                m = int(ds.metadata_labels[i])
                row.append("" if m == MISSING else ds.metadata_categories[m])
            writer.writerow(row)
    return schema


def load_csv(path, schema, name: str | None = None) -> TimeSeriesDataset:
    schema = read_schema(schema)
    columns = schema["columns"]
    label_col = schema.get("label_column")
    meta_col = schema.get("metadata_column")
    categories = tuple(schema.get("metadata_categories") or DEFAULT_STATUS)
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"no such file: {path}")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        pos = {h.strip(): i for i, h in enumerate(header)}
        wanted = [c["name"] for c in columns] + [c for c in (label_col, meta_col) if c]
        for col in wanted:
            if col not in pos:
                raise IngestionError(f"{path}: missing column", column=col)
        kinds = []
        for c in columns:
            kind = c.get("kind", CONTINUOUS)
            if kind not in COLUMN_KINDS:
                raise IngestionError(f"{path}: unknown kind {kind!r}", column=c["name"])
            kinds.append(kind)

        values, labels, meta = [], [], []
        for r, row in enumerate(reader, start=1):
            if not row:
                continue
            vals = []
            for c, kind in zip(columns, kinds):
                cell = row[pos[c["name"]]].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise IngestionError(f"{path}: non-numeric cell {cell!r}", row=r, column=c["name"]) from None
                if kind == BINARY and v not in (0.0, 1.0):
                    raise IngestionError(f"{path}: binary column holds {cell!r}", row=r, column=c["name"])
                if not np.isfinite(v):
                    raise IngestionError(f"{path}: non-finite cell {cell!r}", row=r, column=c["name"])
                vals.append(v)
            values.append(vals)
            if label_col:
                cell = row[pos[label_col]].strip()
                if cell not in ("0", "1", "0.0", "1.0"):
                    raise IngestionError(f"{path}: anomaly label must be 0 or 1, got {cell!r}",
                                         row=r, column=label_col)
                labels.append(int(float(cell)))
            if meta_col:
                cell = row[pos[meta_col]].strip()
                if cell == "":
                    meta.append(MISSING)
                elif cell in categories:
                    meta.append(categories.index(cell))
                else:
                    raise IngestionError(f"{path}: unknown category {cell!r}", row=r, column=meta_col)

    n_cols = len(columns)
    return TimeSeriesDataset(
        values=np.asarray(values, dtype=np.float64).reshape(-1, n_cols),
        column_names=tuple(c["name"] for c in columns),
        column_kinds=tuple(kinds),
        anomaly_labels=np.asarray(labels, dtype=np.int64) if label_col else None,
        metadata_labels=np.asarray(meta, dtype=np.int64) if meta_col else None,
        metadata_categories=categories,
        name=name or path.stem,
    )
