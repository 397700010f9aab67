from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DimensionError


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray        # [F]
    components: np.ndarray  # [k, F], orthonormal rows

    @property
    def k(self) -> int:
        return self.components.shape[0]


def pca_fit(X, k: int) -> PcaModel:
    """Top-``k`` right singular vectors of the centered data."""
    X = np.asarray(X, dtype=np.float64)
    n, f = X.shape
    if not 1 <= k <= f:
        raise ConfigError(f"number of components must be in [1, {f}], got {k}")
    if n < k:
        raise ConfigError(f"need at least {k} rows to fit {k} components, got {n}")
    mean = X.mean(axis=0)
    _, _, vt = np.linalg.svd(X - mean, full_matrices=True)
    return PcaModel(mean=mean, components=vt[:k].copy())


def pca_reconstruct(model: PcaModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Project onto the components and back; return ``(x_tilde, per-row MSE)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.mean.shape[0]:
        raise DimensionError(f"PCA fitted on {model.mean.shape[0]} features, got {x.shape[-1]}")
    centered = x - model.mean
    x_tilde = model.mean + (centered @ model.components.T) @ model.components
    deviation = ((x - x_tilde) ** 2).mean(axis=-1)
    return x_tilde, deviation
