"""Command line: run, generate-data, evaluate, report."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..data.dataset import write_csv
from ..data.synthetic import SynthConfig, synth_generate
from ..errors import ConfigError, SparseVaeError
from ..evaluation.metrics import sweep_percentiles
from .config import validate_config
from .experiment import run_experiment
from .report import json_safe, emit_report, format_table, load_run, read_table

log = logging.getLogger("sparsevae")


def _read_column(path: Path, names: tuple[str, ...]) -> tuple[str, list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SparseVaeError(f"{path}: empty file")
        for n in names:
            if n in reader.fieldnames:
                return n, [row[n] for row in reader]
    raise SparseVaeError(f"{path}: needs one of the columns {', '.join(names)}")


def cmd_run(args) -> int:
    cfg = validate_config(args.config)
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.repeats is not None:
        cfg.repeats = args.repeats
    if args.check_unduplicated:
        cfg.check_unduplicated = True
    out = args.out or cfg.output_dir
    if out is None:
        raise SparseVaeError("no output directory: pass --out or set output_dir in the config")
    out = Path(out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise FileExistsError(f"{out} is not empty; pass --force to overwrite")
    report = run_experiment(cfg)
    emit_report(report, out, force=args.force)
    print(format_table(report.table))
    print(f"\nwrote {out}")
    return 0


def cmd_generate(args) -> int:
    cfg = SynthConfig.load(args.config)
    seed = 0 if args.seed is None else args.seed
    bundle = synth_generate(cfg, seed=seed)
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise FileExistsError(f"{out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    schema = None
    for name, ds in bundle.datasets().items():
        schema = write_csv(ds, out / f"{name}.csv")
    (out / "schema.json").write_text(json.dumps(schema, indent=2) + "\n", encoding="utf-8")
    (out / "manifest.json").write_text(json.dumps(json_safe(bundle.manifest()), indent=2, sort_keys=True)
                                       + "\n", encoding="utf-8")
    print(f"wrote {len(bundle.datasets())} splits to {out}")
    return 0


def cmd_evaluate(args) -> int:
    """Percentile sweep of precomputed scores.

    ``scores.csv`` needs a ``score`` column and may carry a ``split`` column;
    rows marked ``validation`` set the thresholds, the rest are evaluated
    against ``labels.csv`` (column ``label`` or ``anomaly``). Without
    validation rows the thresholds come from the evaluated scores.
    """
    scores_path, labels_path = Path(args.scores), Path(args.labels)
    with open(scores_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "score" not in reader.fieldnames:
            raise SparseVaeError(f"{scores_path}: needs a 'score' column")
        rows = list(reader)
    split = [r.get("split", "test") or "test" for r in rows]
    scores = np.array([float(r["score"]) for r in rows])
    is_val = np.array([s == "validation" for s in split])
    _, labels = _read_column(labels_path, ("label", "anomaly"))
    y = np.array([int(float(v)) for v in labels])
    test = scores[~is_val]
    if len(test) != len(y):
        raise SparseVaeError(f"{len(test)} scores to evaluate but {len(y)} labels")
    val = scores[is_val] if is_val.any() else test
    report = sweep_percentiles(test, y, val)
    sel = report.selected
    doc = {"schema_version": 1, "best_f1": sel["f1"], "percentile": sel["percentile"],
           "threshold": sel["threshold"], "auc": report.auc,
           "precision": sel["precision"], "recall": sel["recall"], "accuracy": sel["accuracy"],
           "thresholds_from": "validation" if is_val.any() else "evaluated scores"}
    if args.out:
        out = Path(args.out)
        if out.exists() and not args.force:
            raise FileExistsError(f"{out} exists; pass --force to overwrite")
        out.write_text(json.dumps(json_safe({**doc, "rows": report.rows}), indent=2) + "\n",
                       encoding="utf-8")
    print(json.dumps(json_safe(doc), indent=2))
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    report = load_run(run_dir)
    stored = read_table(run_dir / "table.csv") if (run_dir / "table.csv").exists() else None
    print(format_table(report.table))
    fried = report.statistics.get("friedman")
    if fried:
        print(f"\nFriedman chi2 = {fried['statistic']:.4f}, p = {fried['p']:.4g}")
    if stored is not None and stored != report.table:
        print("\nwarning: table.csv differs from the table recomputed from run_report.json",
              file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsevae", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, help="override base_seed")
    p.add_argument("--repeats", type=int, help="override repeats")
    p.add_argument("--out", help="output directory (default: output_dir from the config)")
    p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    p.add_argument("--check-unduplicated", action="store_true",
                   help="also score the best models on the original mixed series")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("generate-data", help="write a synthetic dataset as CSV")
    p.add_argument("config", help="synthetic config (JSON)")
    p.add_argument("out")
    p.add_argument("--seed", type=int)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="percentile sweep over precomputed scores")
    p.add_argument("scores")
    p.add_argument("labels")
    p.add_argument("--out", help="write the full sweep as JSON")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="print the table of a finished run")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print("error: invalid configuration", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return 2
    except SparseVaeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
