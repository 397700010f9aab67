"""Versioned JSON checkpoints of named parameter arrays."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import DataError

CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    entries = {
        name: {"shape": list(np.shape(a)), "values": np.asarray(a, dtype=np.float64).ravel().tolist()}
        for name, a in params.items()
    }
    doc = {"schema_version": CHECKPOINT_VERSION, "meta": meta or {}, "params": entries}
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema_version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {doc.get('schema_version')!r}")
    out = {}
    for name, entry in doc["params"].items():
        arr = np.asarray(entry["values"], dtype=np.float64)
        shape = tuple(entry["shape"])
        if arr.size != int(np.prod(shape)):
            raise DataError(f"checkpoint entry {name!r}: {arr.size} values for shape {shape}")
        out[name] = arr.reshape(shape)
    return out, doc.get("meta", {})
