from .isoforest import (
    IsoForestModel,
    average_path_length,
    isoforest_fit,
    isoforest_random_search,
    isoforest_score,
)
from .pca import PcaModel, pca_fit, pca_reconstruct

__all__ = [
    "IsoForestModel",
    "PcaModel",
    "average_path_length",
    "isoforest_fit",
    "isoforest_random_search",
    "isoforest_score",
    "pca_fit",
    "pca_reconstruct",
]
