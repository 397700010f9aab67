from .dataset import (
    BINARY,
    CONTINUOUS,
    MISSING,
    ScalerParams,
    SplitBundle,
    TimeSeriesDataset,
    load_csv,
    read_schema,
    schema_for,
    write_csv,
)
from .preprocessing import (
    WindowBatch,
    apply_scaler,
    drop_zero_variance,
    even_odd_split_duplicate,
    fit_scaler,
    make_bundle,
    preprocess,
    scale_bundle,
    windowize,
)
from .synthetic import SynthConfig, synth_generate

__all__ = [
    "BINARY",
    "CONTINUOUS",
    "MISSING",
    "ScalerParams",
    "SplitBundle",
    "SynthConfig",
    "TimeSeriesDataset",
    "WindowBatch",
    "apply_scaler",
    "drop_zero_variance",
    "even_odd_split_duplicate",
    "fit_scaler",
    "load_csv",
    "make_bundle",
    "preprocess",
    "read_schema",
    "scale_bundle",
    "schema_for",
    "synth_generate",
    "windowize",
    "write_csv",
]
