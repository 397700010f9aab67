"""Experiment configuration: YAML on disk, validated into plain dataclasses."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from ..data.synthetic import SynthConfig
from ..errors import ConfigError
from ..models.architecture import VaeArchitecture
from ..models.losses import LossWeights
from ..models.vae import POOLINGS

CONFIG_SCHEMA_VERSION = 1

MODEL_TYPES = ("vae_err", "vae_prob", "vae_sl", "vae_md", "dnn", "pca", "isof")
NEURAL_TYPES = ("vae_err", "vae_prob", "vae_sl", "vae_md", "dnn")
DISPLAY_NAMES = {
    "vae_err": ("VAE Err",),
    "vae_prob": ("VAE Prob",),
    "vae_sl": ("VAE SL Avg", "VAE SL Max"),
    "vae_md": ("VAE MD",),
    "dnn": ("DNN",),
    "pca": ("PCA",),
    "isof": ("IsoF",),
}
CSV_SPLITS = ("unsupervised_train", "validation", "mixed")
ARCH_KEYS = ("bottleneck_width", "td_dense_layers", "lstm_layers")
WEIGHT_KEYS = ("w_recon", "w_kl", "w_label", "w_anomaly_class", "w_metadata")
PARAM_KEYS = {
    "vae_err": ("lr", "l2_lambda"),
    "vae_prob": ("lr", "l2_lambda"),
    "vae_sl": ("lr", "l2_lambda", "pooling", "bounds"),
    "vae_md": ("lr", "l2_lambda", "pooling", "bounds"),
    "dnn": ("lr", "l2_lambda"),
    "pca": ("k",),
    "isof": ("tries",),
}


@dataclass
class DatasetSpec:
    name: str
    synthetic: SynthConfig | None = None
    seed: int = 0
    csv: dict | None = None  # split name -> path, plus "schema"


@dataclass
class ModelSpec:
    type: str
    name: str
    arch: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    @property
    def outputs(self) -> tuple[str, ...]:
        base = DISPLAY_NAMES[self.type]
        if self.name == base[0]:
            return base
        return tuple(self.name + n[len(base[0]):] for n in base) if self.type == "vae_sl" else (self.name,)

    def architecture(self, input_width: int, window_size: int, **extra) -> VaeArchitecture:
        return VaeArchitecture(input_width=input_width, window_size=window_size, **extra, **self.arch)

    def loss_weights(self) -> LossWeights:
        return LossWeights(**self.weights)


@dataclass
class ExperimentConfig:
    datasets: list[DatasetSpec]
    models: list[ModelSpec]
    window_size: int = 10
    epochs: int = 30
    batch_size: int = 32
    repeats: int = 50
    base_seed: int = 0
    scoring_samples: int = 10
    validation_percentile: float = 99
    label_fraction: float = 1.0
    metadata_fraction: float = 1.0
    check_unduplicated: bool = False
    output_dir: str | None = None
    schema_version: int = CONFIG_SCHEMA_VERSION

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["datasets"] = []
        for d in self.datasets:
            entry = {"name": d.name, "seed": d.seed}
            if d.synthetic is not None:
                entry["synthetic"] = d.synthetic.to_dict()
            if d.csv is not None:
                entry["csv"] = dict(d.csv)
            doc["datasets"].append(entry)
        return doc


_TOP_KEYS = {"schema_version", "datasets", "models", "window_size", "epochs", "batch_size",
             "repeats", "base_seed", "scoring_samples", "validation_percentile",
             "label_fraction", "metadata_fraction", "check_unduplicated", "output_dir"}


def _int_field(doc, key, default, problems, minimum=None):
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        problems.append(f"{key}: expected an integer, got {value!r}")
        return default
    if minimum is not None and value < minimum:
        problems.append(f"{key}: must be >= {minimum}, got {value}")
    return value


def _fraction(doc, key, problems):
    value = doc.get(key, 1.0)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
        problems.append(f"{key}: expected a number in [0, 1], got {value!r}")
        return 1.0
    return float(value)


def _parse_dataset(i, entry, base: Path, problems) -> DatasetSpec | None:
    where = f"datasets[{i}]"
    if not isinstance(entry, dict):
        problems.append(f"{where}: expected a mapping")
        return None
    name = str(entry.get("name", f"dataset{i}"))
    has_synth, has_csv = "synthetic" in entry, "csv" in entry
    if has_synth == has_csv:
        problems.append(f"{where}: give exactly one of 'synthetic' or 'csv'")
        return None
    seed = entry.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        problems.append(f"{where}.seed: expected an integer, got {seed!r}")
        seed = 0
    if has_synth:
        try:
            synth = SynthConfig.from_dict(entry["synthetic"] or {})
        except ConfigError as exc:
            problems.extend(f"{where}.synthetic: {p}" for p in exc.problems)
            return None
        except (TypeError, AttributeError) as exc:
            problems.append(f"{where}.synthetic: {exc}")
            return None
        return DatasetSpec(name=name, synthetic=synth, seed=seed)

    paths = entry["csv"]
    if not isinstance(paths, dict):
        problems.append(f"{where}.csv: expected a mapping of split names to paths")
        return None
    resolved = {}
    for key in CSV_SPLITS + ("schema",):
        if key not in paths:
            problems.append(f"{where}.csv.{key}: missing (needs {', '.join(CSV_SPLITS)} and schema)")
            continue
        p = Path(paths[key])
        p = p if p.is_absolute() else base / p
        if not p.exists():
            problems.append(f"{where}.csv.{key}: file not found: {p}")
        resolved[key] = str(p)
    extra = set(paths) - set(CSV_SPLITS) - {"schema"}
    if extra:
        problems.append(f"{where}.csv: unknown keys {sorted(extra)}")
    return DatasetSpec(name=name, csv=resolved, seed=seed)


def _parse_model(i, entry, problems) -> ModelSpec | None:
    where = f"models[{i}]"
    if not isinstance(entry, dict):
        problems.append(f"{where}: expected a mapping")
        return None
    kind = entry.get("type")
    if kind not in MODEL_TYPES:
        problems.append(f"{where}.type: unknown model {kind!r}; allowed: {', '.join(MODEL_TYPES)}")
        return None
    spec = ModelSpec(type=kind, name=str(entry.get("name", DISPLAY_NAMES[kind][0])),
                     arch=dict(entry.get("arch") or {}), weights=dict(entry.get("weights") or {}),
                     params=dict(entry.get("params") or {}))
    for key in spec.arch:
        if key not in ARCH_KEYS:
            problems.append(f"{where}.arch.{key}: unknown; allowed: {', '.join(ARCH_KEYS)}")
    for key, value in spec.weights.items():
        if key not in WEIGHT_KEYS:
            problems.append(f"{where}.weights.{key}: unknown; allowed: {', '.join(WEIGHT_KEYS)}")
        elif value is not None and (not isinstance(value, (int, float)) or value < 0):
            problems.append(f"{where}.weights.{key}: must be a nonnegative number, got {value!r}")
    for key in spec.params:
        if key not in PARAM_KEYS[kind]:
            allowed = ", ".join(PARAM_KEYS[kind]) or "none"
            problems.append(f"{where}.params.{key}: unknown for {kind}; allowed: {allowed}")
    if spec.params.get("pooling", "max") not in POOLINGS:
        problems.append(f"{where}.params.pooling: must be one of {', '.join(POOLINGS)}")
    if spec.params.get("bounds", "validation") not in ("validation", "validation+test"):
        problems.append(f"{where}.params.bounds: must be 'validation' or 'validation+test'")
    tries = spec.params.get("tries", 100)
    if isinstance(tries, bool) or not isinstance(tries, int) or tries < 1:
        problems.append(f"{where}.params.tries: must be a positive integer")
    k = spec.params.get("k")
    if k is not None and (isinstance(k, bool) or not isinstance(k, int) or k < 1):
        problems.append(f"{where}.params.k: must be a positive integer or null (search)")
    return spec


def _check_sizes(cfg: ExperimentConfig, problems) -> None:
    """Window size against split lengths, architecture against feature count."""
    for d in cfg.datasets:
        if d.synthetic is None:
            continue  # CSV lengths are checked when the files are loaded
        s = d.synthetic
        shortest = min(s.n_train, s.n_validation, s.n_mixed)
        if cfg.window_size > shortest:
            problems.append(f"window_size: {cfg.window_size} exceeds the {shortest} rows of the "
                            f"shortest split of dataset {d.name!r}")
        width = s.n_continuous + s.n_binary
        for m in cfg.models:
            if m.type in NEURAL_TYPES:
                try:
                    m.architecture(width, cfg.window_size)
                except ConfigError as exc:
                    problems.extend(f"model {m.name!r} on {d.name!r}: {p}" for p in exc.problems)
                except TypeError as exc:
                    problems.append(f"model {m.name!r}: {exc}")
            if m.type == "pca" and m.params.get("k") is not None and m.params["k"] > width:
                problems.append(f"model {m.name!r}: k={m.params['k']} exceeds {width} features")


def parse_config(doc: dict, base_dir=".") -> ExperimentConfig:
    """Validate a config mapping; every problem is collected before raising."""
    problems: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["config must be a mapping at the top level"])
    version = doc.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        problems.append(f"schema_version: {version!r} is not supported (expected {CONFIG_SCHEMA_VERSION})")
    for key in sorted(set(doc) - _TOP_KEYS):
        problems.append(f"{key}: unknown top-level key")

    base = Path(base_dir)
    raw_datasets = doc.get("datasets")
    if not isinstance(raw_datasets, list) or not raw_datasets:
        problems.append("datasets: need a non-empty list")
        raw_datasets = []
    datasets = [d for i, e in enumerate(raw_datasets) if (d := _parse_dataset(i, e, base, problems))]
    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        problems.append(f"datasets: names must be unique, got {names}")

    raw_models = doc.get("models", [])
    if not isinstance(raw_models, list):
        problems.append("models: expected a list")
        raw_models = []
    models = [m for i, e in enumerate(raw_models) if (m := _parse_model(i, e, problems))]
    outputs = [n for m in models for n in m.outputs]
    if len(set(outputs)) != len(outputs):
        problems.append(f"models: result names must be unique, got {outputs}")

    cfg = ExperimentConfig(
        datasets=datasets,
        models=models,
        window_size=_int_field(doc, "window_size", 10, problems, 1),
        epochs=_int_field(doc, "epochs", 30, problems, 0),
        batch_size=_int_field(doc, "batch_size", 32, problems, 1),
        repeats=_int_field(doc, "repeats", 50, problems, 1),
        base_seed=_int_field(doc, "base_seed", 0, problems, 0),
        scoring_samples=_int_field(doc, "scoring_samples", 10, problems, 1),
        label_fraction=_fraction(doc, "label_fraction", problems),
        metadata_fraction=_fraction(doc, "metadata_fraction", problems),
        check_unduplicated=bool(doc.get("check_unduplicated", False)),
        output_dir=doc.get("output_dir"),
    )
    vp = doc.get("validation_percentile", 99)
    if isinstance(vp, bool) or not isinstance(vp, (int, float)) or not 0 <= vp <= 100 or vp != int(vp):
        problems.append(f"validation_percentile: expected an integer in [0, 100], got {vp!r}")
    else:
        cfg.validation_percentile = int(vp)
    if not problems:
        _check_sizes(cfg, problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def validate_config(path) -> ExperimentConfig:
    """Load a YAML experiment file; relative paths resolve against its folder."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"]) from None
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not valid YAML ({exc})"]) from None
    return parse_config(doc if doc is not None else {}, base_dir=path.parent)
