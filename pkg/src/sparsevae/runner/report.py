"""Writing a RunReport to disk and reading it back."""

from __future__ import annotations

import csv
import json
import math
import re
import shutil
from pathlib import Path

from ..errors import UsageError
from ..evaluation.metrics import MetricsReport
from .experiment import (
    REPORT_SCHEMA_VERSION,
    ModelResult,
    RepeatResult,
    RunReport,
    build_table,
    compute_statistics,
)

TABLE_COLUMNS = ("dataset", "model", "repeats_ok", "best_repeat", "seed", "f1", "auc",
                 "accuracy", "precision", "recall", "percentile", "validation_f1",
                 "p_value", "best_f1", "best_auc", "error")
_INT_COLUMNS = {"repeats_ok", "best_repeat", "seed", "percentile"}
_BOOL_COLUMNS = {"best_f1", "best_auc"}
_STR_COLUMNS = {"dataset", "model", "error"}
SWEEP_COLUMNS = ("percentile", "threshold", "tp", "fp", "tn", "fn", "accuracy", "precision",
                 "recall", "f1", "tpr", "fpr")


def json_safe(obj):
    """JSON-safe copy: NaN/inf become null, tuples become lists."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return json_safe(obj.item())
    return obj


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(json_safe(doc), indent=2, sort_keys=True, allow_nan=False) + "\n",
                    encoding="utf-8")


def slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_").lower() or "unnamed"


def _parse_cell(column: str, text: str):
    if text == "":
        return None
    if column in _STR_COLUMNS:
        return text
    if column in _BOOL_COLUMNS:
        return text == "true"
    if column in _INT_COLUMNS:
        return int(text)
    return float(text)


def read_table(path) -> list[dict]:
    """Parse table.csv back into the in-memory row format."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [{c: _parse_cell(c, row[c]) for c in reader.fieldnames} for row in reader]


def _repeat_doc(r: RepeatResult) -> dict:
    return {"repeat": r.repeat, "seed": r.seed, "error": r.error, "info": r.info,
            "report": None if r.report is None else r.report.to_dict()}


def report_to_dict(report: RunReport) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "created": report.created,
        "config": report.config,
        "results": [{"dataset": res.dataset, "model": res.name, "type": res.model_type,
                     "best_index": res.best_index, "unduplicated": res.unduplicated,
                     "repeats": [_repeat_doc(r) for r in res.repeats]}
                    for res in report.results],
        "statistics": report.statistics,
        "manifest": report.manifest,
    }


def emit_report(report: RunReport, out_dir, force: bool = False) -> list[Path]:
    """Write summary.json, table.csv, manifest.json, run_report.json and per-model CSVs.

    An existing non-empty directory is only replaced when ``force`` is set.
    """
    out = Path(out_dir)
    if out.exists() and not out.is_dir():
        raise FileExistsError(f"{out} exists and is not a directory")
    if out.exists() and any(out.iterdir()):
        if not force:
            raise FileExistsError(f"{out} is not empty; pass --force to overwrite")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    errors = [{"dataset": res.dataset, "model": res.name, "repeat": r.repeat, "error": r.error}
              for res in report.results for r in res.repeats if r.error]
    summary = {"schema_version": REPORT_SCHEMA_VERSION, "table": report.table,
               "statistics": report.statistics, "errors": errors,
               "unduplicated": {f"{res.dataset}/{res.name}": res.unduplicated
                                for res in report.results if res.unduplicated is not None}}
    for name, doc in (("summary.json", summary), ("manifest.json", report.manifest),
                      ("run_report.json", report_to_dict(report))):
        _write_json(out / name, doc)
        written.append(out / name)
    _write_csv(out / "table.csv", TABLE_COLUMNS, report.table)
    written.append(out / "table.csv")

    models_dir = out / "models"
    for res in report.results:
        folder = models_dir / slug(res.dataset) / slug(res.name)
        folder.mkdir(parents=True, exist_ok=True)
        rows = []
        for r in res.repeats:
            row = {"repeat": r.repeat, "seed": r.seed, "error": r.error}
            if r.report is not None:
                sel = r.report.selected
                row.update(f1=sel["f1"], auc=r.report.auc if r.report.auc == r.report.auc else None,
                           accuracy=sel["accuracy"], precision=sel["precision"],
                           recall=sel["recall"], percentile=sel.get("percentile"))
            rows.append(row)
        _write_csv(folder / "repeats.csv", ("repeat", "seed", "f1", "auc", "accuracy", "precision",
                                            "recall", "percentile", "error"), rows)
        written.append(folder / "repeats.csv")
        if res.best is not None:
            best = res.best.report
            _write_csv(folder / "sweep.csv", SWEEP_COLUMNS, best.rows)
            _write_csv(folder / "roc.csv", ("fpr", "tpr"),
                       [{"fpr": f, "tpr": t} for f, t in sorted(set(best.roc_points()))])
            written.extend([folder / "sweep.csv", folder / "roc.csv"])
    return written


def load_run(run_dir) -> RunReport:
    """Rebuild a RunReport from run_report.json; best repeats are re-selected."""
    path = Path(run_dir) / "run_report.json"
    if not path.exists():
        raise UsageError(f"{run_dir} holds no run_report.json")
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise UsageError(f"unsupported report schema_version {doc.get('schema_version')!r}")
    results = []
    for entry in doc["results"]:
        res = ModelResult(entry["dataset"], entry["model"], entry["type"],
                          unduplicated=entry.get("unduplicated"))
        for r in entry["repeats"]:
            rep = None if r["report"] is None else MetricsReport.from_dict(r["report"])
            res.repeats.append(RepeatResult(r["repeat"], r["seed"], rep, r["error"], r["info"]))
        res.select_best()
        results.append(res)
    statistics = compute_statistics(results)
    return RunReport(config=doc["config"], results=results,
                     table=build_table(results, statistics), statistics=statistics,
                     manifest=doc["manifest"], created=doc.get("created", ""))


def format_table(rows: list[dict]) -> str:
    """Plain-text version of the comparison table, best marks starred."""
    def num(v, star=False):
        if v is None:
            return "-"
        return f"{v:.2f}{'*' if star else ''}"

    lines = [f"{'dataset':<14}{'model':<14}{'f1':>8}{'auc':>8}{'p':>10}  repeats"]
    for r in rows:
        p = "opt" if r["p_value"] is None and r["best_f1"] else (
            "-" if r["p_value"] is None else f"{r['p_value']:.2g}")
        note = f"  {r['error']}" if r["error"] and r["f1"] is None else ""
        lines.append(f"{r['dataset']:<14}{r['model']:<14}{num(r['f1'], r['best_f1']):>8}"
                     f"{num(r['auc'], r['best_auc']):>8}{p:>10}  {r['repeats_ok']}{note}")
    return "\n".join(lines)
