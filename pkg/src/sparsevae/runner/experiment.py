"""Run every configured model on every dataset, repeat, keep the best.

Order is fixed: datasets in config order, models in config order, repeats
0..N-1 with seed ``base_seed + i``. Nothing here reads the clock except the
``created`` stamp and per-repeat timings, which never enter the tables.
"""

from __future__ import annotations

import logging
import platform
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
import scipy

from .. import __version__
from ..baselines.isoforest import isoforest_random_search
from ..baselines.pca import pca_fit, pca_reconstruct
from ..data.dataset import load_csv
from ..data.preprocessing import WindowBatch, make_bundle, preprocess, windowize
from ..data.synthetic import synth_generate
from ..errors import DataError
from ..evaluation.combine import barycentric_measure, sweep_combined
from ..evaluation.metrics import (
    MetricsReport,
    best_report_index,
    single_point_report,
    sweep_percentiles,
    truncate2,
)
from ..evaluation.stats import friedman_test, two_sample_ttest
from ..models.dnn import DNNClassifier
from ..models.training import train
from ..models.vae import VAE
from ..nn.layers import make_rng
from .config import ExperimentConfig, ModelSpec

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
DETERMINISTIC_TYPES = ("pca",)  # no seed dependence: fitted once


@dataclass
class RepeatResult:
    repeat: int
    seed: int
    report: MetricsReport | None = None
    error: str | None = None
    info: dict = field(default_factory=dict)


@dataclass
class ModelResult:
    dataset: str
    name: str
    model_type: str
    repeats: list[RepeatResult] = field(default_factory=list)
    best_index: int | None = None
    unduplicated: dict | None = None

    @property
    def best(self) -> RepeatResult | None:
        return None if self.best_index is None else self.repeats[self.best_index]

    @property
    def errors(self) -> list[str]:
        return [r.error for r in self.repeats if r.error]

    def f1_values(self) -> list[float]:
        return [r.report.best_f1 for r in self.repeats if r.report is not None]

    def select_best(self) -> int | None:
        self.best_index = best_report_index([r.report for r in self.repeats])
        return self.best_index


@dataclass
class RunReport:
    config: dict
    results: list[ModelResult]
    table: list[dict]
    statistics: dict
    manifest: dict
    created: str = ""

    def result(self, dataset: str, model: str) -> ModelResult:
        for r in self.results:
            if r.dataset == dataset and r.name == model:
                return r
        raise KeyError(f"no result for {model!r} on {dataset!r}")


# -- data -------------------------------------------------------------------

@dataclass
class PreparedData:
    name: str
    bundle: object
    windows: dict[str, WindowBatch]
    rows: dict[str, WindowBatch]

    @property
    def input_width(self) -> int:
        return self.windows["unsupervised_train"].x.shape[2]


def build_bundle(spec):
    if spec.synthetic is not None:
        return synth_generate(spec.synthetic, seed=spec.seed)
    schema = spec.csv["schema"]
    parts = {k: load_csv(spec.csv[k], schema, name=f"{spec.name}-{k}")
             for k in ("unsupervised_train", "validation", "mixed")}
    return make_bundle(parts["unsupervised_train"], parts["validation"], parts["mixed"],
                       source={k: spec.csv[k] for k in sorted(spec.csv)})


def prepare_dataset(spec, window_size: int) -> PreparedData:
    bundle = preprocess(build_bundle(spec))
    for name, ds in bundle.datasets().items():
        if len(ds) < window_size:
            raise DataError(f"dataset {spec.name!r}: split {name} has {len(ds)} rows, "
                            f"fewer than window_size={window_size}")
    for name in ("supervised_train", "test"):
        if getattr(bundle, name).anomaly_labels is None:
            raise DataError(f"dataset {spec.name!r}: split {name} carries no anomaly labels")
    splits = bundle.datasets()
    windows = {k: windowize(ds, window_size) for k, ds in splits.items()}
    rows = {k: windowize(ds, 1) for k, ds in splits.items()}
    return PreparedData(spec.name, bundle, windows, rows)


def _thin(values, fraction: float, rng) -> np.ndarray | None:
    """Hide all but ``fraction`` of the known entries (set them to -1)."""
    if values is None:
        return None
    out = np.array(values, dtype=np.int64, copy=True)
    known = np.flatnonzero(out >= 0)
    n_hide = len(known) - int(round(fraction * len(known)))
    if n_hide > 0:
        out[rng.choice(known, size=n_hide, replace=False)] = -1
    return out


# -- models -----------------------------------------------------------------

def _vae_training_set(spec: ModelSpec, data: PreparedData, cfg: ExperimentConfig, seed: int):
    unsup = data.windows["unsupervised_train"]
    if spec.type in ("vae_err", "vae_prob"):
        return unsup
    rng = make_rng(np.random.SeedSequence([seed, 1]))
    unlabeled = np.full(len(unsup), -1, dtype=np.int64)
    sup = data.windows["supervised_train"]
    sup = sup.with_labels(labels=_thin(sup.window_labels, cfg.label_fraction, rng))
    if spec.type == "vae_md":
        if unsup.window_metadata is None or sup.window_metadata is None:
            raise DataError("VAE MD needs production metadata in the training splits")
        unsup = unsup.with_labels(labels=unlabeled,
                                  metadata=_thin(unsup.window_metadata, cfg.metadata_fraction, rng))
        sup = sup.with_labels(metadata=_thin(sup.window_metadata, cfg.metadata_fraction, rng))
    else:
        unsup = unsup.with_labels(labels=unlabeled)
    return WindowBatch.concat([unsup, sup])


def _fit_neural(spec: ModelSpec, data: PreparedData, cfg: ExperimentConfig, seed: int):
    arch = spec.architecture(data.input_width, cfg.window_size,
                             batch_size=cfg.batch_size, epochs=cfg.epochs)
    opts = dict(epochs=cfg.epochs, batch_size=cfg.batch_size, seed=seed,
                lr=spec.params.get("lr", 1e-3), l2_lambda=spec.params.get("l2_lambda", 1e-3))
    if spec.type == "dnn":
        sup = data.windows["supervised_train"]
        labels = _thin(sup.window_labels, cfg.label_fraction,
                       make_rng(np.random.SeedSequence([seed, 1])))
        sup = sup.with_labels(labels=labels).subset(np.flatnonzero(labels >= 0))
        model, history = train(DNNClassifier(arch, seed=seed), sup, None, **opts)
    else:
        variant = spec.type.split("_", 1)[1]
        model = VAE(arch, data.windows["unsupervised_train"].column_kinds, variant,
                    weights=spec.loss_weights(), seed=seed,
                    pooling=spec.params.get("pooling", "max"))
        model, history = train(model, _vae_training_set(spec, data, cfg, seed),
                               data.windows["validation"], **opts)
    return model, {"final_train_loss": history.train_loss[-1] if history.train_loss else None}


def _evaluate_neural(spec: ModelSpec, model, val: WindowBatch, test: WindowBatch,
                     cfg: ExperimentConfig, seed: int) -> dict[str, MetricsReport]:
    y = test.window_labels
    vp = cfg.validation_percentile
    if spec.type == "dnn":
        proba = model.predict_proba(test.x)
        return {spec.outputs[0]: single_point_report((proba > 0.5).astype(np.int64), y, proba)}
    sv = model.score(val.x, n_samples=cfg.scoring_samples, seed=seed)
    st = model.score(test.x, n_samples=cfg.scoring_samples, seed=seed + 1)
    if spec.type in ("vae_err", "vae_prob"):
        return {spec.outputs[0]: sweep_percentiles(st["deviation"], y, sv["deviation"], vp)}
    bounds = spec.params.get("bounds", "validation")
    if spec.type == "vae_sl":
        avg_name, max_name = spec.outputs
        return {
            avg_name: sweep_combined(sv["deviation"], st["deviation"], st["pi_anomalous"], y,
                                     "avg", None, vp, bounds),
            max_name: sweep_combined(sv["deviation"], st["deviation"], st["pi_anomalous"], y,
                                     "max", None, vp, bounds),
        }
    measure = barycentric_measure(st["metadata_probs"])
    return {spec.outputs[0]: sweep_combined(sv["deviation"], st["deviation"], st["pi_anomalous"],
                                            y, "avg", measure, vp, bounds)}


def _fit_pca(spec: ModelSpec, data: PreparedData, cfg: ExperimentConfig):
    """One PCA per candidate k (all k below the feature count unless fixed)."""
    x = data.rows["unsupervised_train"].x[:, 0, :]
    width = x.shape[1]
    ks = [spec.params["k"]] if spec.params.get("k") else list(range(1, max(width, 2)))
    val, test = data.rows["validation"], data.rows["test"]
    candidates = []
    for k in ks:
        model = pca_fit(x, min(k, width))
        candidates.append((model, _evaluate_pca(model, val, test, cfg)))
    best = best_report_index([c[1] for c in candidates])
    model, report = candidates[best]
    return model, report, {"k": model.k, "k_searched": ks}


def _evaluate_pca(model, val: WindowBatch, test: WindowBatch, cfg) -> MetricsReport:
    _, dv = pca_reconstruct(model, val.x[:, 0, :])
    _, dt = pca_reconstruct(model, test.x[:, 0, :])
    return sweep_percentiles(dt, test.window_labels, dv, cfg.validation_percentile)


def _evaluate_isof(model, test: WindowBatch) -> MetricsReport:
    x = test.x[:, 0, :]
    return single_point_report(model.predict(x), test.window_labels, model.score(x))


def _fit_isof(spec: ModelSpec, data: PreparedData, seed: int):
    sup = data.rows["supervised_train"]
    model, trials = isoforest_random_search(
        data.rows["unsupervised_train"].x[:, 0, :], sup.x[:, 0, :], sup.window_labels,
        tries=spec.params.get("tries", 100), seed=seed)
    return model, dict(model.params, tries=len(trials))


def _run_repeat(spec: ModelSpec, data: PreparedData, cfg: ExperimentConfig, seed: int):
    """Fit once and evaluate on the test split; returns (fitted, reports, info)."""
    if spec.type == "pca":
        model, report, info = _fit_pca(spec, data, cfg)
        return model, {spec.outputs[0]: report}, info
    if spec.type == "isof":
        model, info = _fit_isof(spec, data, seed)
        return model, {spec.outputs[0]: _evaluate_isof(model, data.rows["test"])}, info
    model, info = _fit_neural(spec, data, cfg, seed)
    reports = _evaluate_neural(spec, model, data.windows["validation"], data.windows["test"], cfg, seed)
    return model, reports, info


def _evaluate_on(spec: ModelSpec, model, data: PreparedData, cfg: ExperimentConfig, seed: int,
                 split: str) -> dict[str, MetricsReport]:
    if spec.type == "pca":
        return {spec.outputs[0]: _evaluate_pca(model, data.rows["validation"], data.rows[split], cfg)}
    if spec.type == "isof":
        return {spec.outputs[0]: _evaluate_isof(model, data.rows[split])}
    return _evaluate_neural(spec, model, data.windows["validation"], data.windows[split], cfg, seed)


def _better(a: MetricsReport, b: MetricsReport | None) -> bool:
    if b is None:
        return True
    return best_report_index([b, a]) == 1


def run_model(spec: ModelSpec, data: PreparedData, cfg: ExperimentConfig) -> list[ModelResult]:
    results = {name: ModelResult(data.name, name, spec.type) for name in spec.outputs}
    n_repeats = 1 if spec.type in DETERMINISTIC_TYPES else cfg.repeats
    best_fitted = {name: None for name in spec.outputs}
    best_reports = {name: None for name in spec.outputs}
    for i in range(n_repeats):
        seed = cfg.base_seed + i
        started = time.perf_counter()
        try:
            fitted, reports, info = _run_repeat(spec, data, cfg, seed)
        except Exception as exc:  # isolate: record and stop this model only
            message = f"{type(exc).__name__}: {exc}"
            log.warning("%s on %s, repeat %d failed: %s", spec.name, data.name, i, message)
            for res in results.values():
                res.repeats.append(RepeatResult(i, seed, error=message))
            break
        info = dict(info, seconds=round(time.perf_counter() - started, 3))
        for name, report in reports.items():
            results[name].repeats.append(RepeatResult(i, seed, report, info=info))
            if _better(report, best_reports[name]):
                best_reports[name], best_fitted[name] = report, (fitted, seed)
        log.info("%s on %s, repeat %d: %s", spec.name, data.name, i,
                 ", ".join(f"{n} f1={r.best_f1:.3f}" for n, r in reports.items()))

    for name, res in results.items():
        res.select_best()
        if cfg.check_unduplicated and res.best is not None:
            fitted, seed = best_fitted[name]
            try:
                mixed = _evaluate_on(spec, fitted, data, cfg, seed, "mixed")[name]
                res.unduplicated = {
                    "f1": mixed.best_f1,
                    "auc": None if mixed.auc != mixed.auc else mixed.auc,
                    "delta_f1": mixed.best_f1 - res.best.report.best_f1,
                }
            except Exception as exc:
                res.unduplicated = {"error": f"{type(exc).__name__}: {exc}"}
    return list(results.values())


# -- aggregation --------------------------------------------------------------

def _nan_to_none(x):
    return None if x is None or x != x else float(x)


def build_table(results: list[ModelResult], statistics: dict | None = None) -> list[dict]:
    """One row per (dataset, model) with the best repeat's metrics.

    ``best_f1``/``best_auc`` mark the dataset winner(s) on the two-decimal
    cut, the resolution the comparison is reported at.
    """
    rows = []
    pvals = (statistics or {}).get("ttests", {})
    for res in results:
        best = res.best
        row = {"dataset": res.dataset, "model": res.name, "repeats_ok": len(res.f1_values()),
               "best_repeat": None, "seed": None, "f1": None, "auc": None, "accuracy": None,
               "precision": None, "recall": None, "percentile": None, "validation_f1": None,
               "p_value": None, "best_f1": False, "best_auc": False,
               "error": res.errors[0] if res.errors else None}
        if best is not None:
            sel = best.report.selected
            vsel = best.report.validation_selected
            row.update(best_repeat=best.repeat, seed=best.seed, f1=sel["f1"],
                       auc=_nan_to_none(best.report.auc), accuracy=sel["accuracy"],
                       precision=sel["precision"], recall=sel["recall"],
                       percentile=sel.get("percentile"),
                       validation_f1=None if vsel is None else vsel["f1"])
            test = pvals.get(res.dataset, {}).get(res.name)
            if test is not None:
                row["p_value"] = test.get("p")
        rows.append(row)
    for ds in dict.fromkeys(r["dataset"] for r in rows):
        group = [r for r in rows if r["dataset"] == ds and r["f1"] is not None]
        if not group:
            continue
        top_f1 = max(truncate2(r["f1"]) for r in group)
        aucs = [r["auc"] for r in group if r["auc"] is not None]
        top_auc = max(truncate2(a) for a in aucs) if aucs else None
        for r in group:
            r["best_f1"] = truncate2(r["f1"]) == top_f1
            r["best_auc"] = r["auc"] is not None and truncate2(r["auc"]) == top_auc
    return rows


def _winner(group: list[ModelResult]) -> ModelResult | None:
    reports = [g.best.report if g.best else None for g in group]
    idx = best_report_index(reports)
    return None if idx is None else group[idx]


def _f1_sample(res: ModelResult, n: int) -> list[float]:
    """Per-repeat f1; a deterministic model stands for n identical repeats."""
    values = res.f1_values()
    if res.model_type in DETERMINISTIC_TYPES and len(values) == 1:
        return values * max(n, 2)
    return values


def compute_statistics(results: list[ModelResult]) -> dict:
    """Welch t-tests against each dataset's winner; Friedman across datasets."""
    stats = {"ttests": {}, "friedman": None, "friedman_skipped": None}
    datasets = list(dict.fromkeys(r.dataset for r in results))
    for ds in datasets:
        group = [r for r in results if r.dataset == ds and r.best is not None]
        winner = _winner(group)
        if winner is None or len(group) < 2:  # nothing to compare against
            continue
        tests = {}
        for res in group:
            if res is winner:
                tests[res.name] = {"against": None, "t": None, "p": None, "note": "best model"}
                continue
            n = max(len(res.f1_values()), len(winner.f1_values()))
            a, b = _f1_sample(res, n), _f1_sample(winner, n)
            if len(a) < 2 or len(b) < 2:
                tests[res.name] = {"against": winner.name, "t": None, "p": None,
                                   "note": "fewer than two repeats"}
                continue
            t, p = two_sample_ttest(a, b)
            tests[res.name] = {"against": winner.name, "t": _nan_to_none(t) if np.isfinite(t) else None,
                               "p": _nan_to_none(p), "note": None}
        stats["ttests"][ds] = tests

    if len(datasets) < 2:
        stats["friedman_skipped"] = "needs at least two datasets"
        return stats
    names = [n for n in dict.fromkeys(r.name for r in results)
             if all(any(r.name == n and r.dataset == d and r.best for r in results) for d in datasets)]
    if len(names) < 3:
        stats["friedman_skipped"] = "needs at least three models with results on every dataset"
        return stats
    matrix = np.array([[next(r.best.report.best_f1 for r in results if r.name == n and r.dataset == d)
                        for d in datasets] for n in names])
    stat, p = friedman_test(matrix)
    stats["friedman"] = {"models": names, "datasets": datasets, "statistic": stat, "p": p}
    return stats


def _environment() -> dict:
    return {"package_version": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    results: list[ModelResult] = []
    splits = {}
    for ds_spec in cfg.datasets:
        try:
            data = prepare_dataset(ds_spec, cfg.window_size)
        except Exception as exc:
            message = f"{type(exc).__name__}: {exc}"
            log.error("dataset %s could not be prepared: %s", ds_spec.name, message)
            splits[ds_spec.name] = {"error": message}
            for spec in cfg.models:
                for name in spec.outputs:
                    results.append(ModelResult(ds_spec.name, name, spec.type,
                                               [RepeatResult(0, cfg.base_seed, error=message)]))
            continue
        splits[ds_spec.name] = data.bundle.manifest()
        for spec in cfg.models:
            results.extend(run_model(spec, data, cfg))

    statistics = compute_statistics(results)
    manifest = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "base_seed": cfg.base_seed,
        "repeats": cfg.repeats,
        "seeds": [cfg.base_seed + i for i in range(cfg.repeats)],
        "environment": _environment(),
        "splits": splits,
    }
    return RunReport(config=cfg.to_dict(), results=results,
                     table=build_table(results, statistics), statistics=statistics,
                     manifest=manifest, created=datetime.now(timezone.utc).isoformat())
