from .config import ExperimentConfig, ModelSpec, DatasetSpec, parse_config, validate_config
from .experiment import ModelResult, RepeatResult, RunReport, run_experiment
from .report import emit_report, load_run, read_table

__all__ = [
    "DatasetSpec",
    "ExperimentConfig",
    "ModelResult",
    "ModelSpec",
    "RepeatResult",
    "RunReport",
    "emit_report",
    "load_run",
    "parse_config",
    "read_table",
    "run_experiment",
    "validate_config",
]
