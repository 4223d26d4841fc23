"""Subcommand front end.

Each stage consumes and produces the documented file formats, so any
stage can be swapped for external tooling (notably predictions coming
from another ML stack). Exit codes: 0 success, 2 configuration error,
3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .baseline import fit_model
from .calibration import CalibrationCurve, apply_curve, bin_scores, fit_isotonic, fit_sigmoid
from .data import (
    SplitSpec,
    load_dataset,
    load_predictions,
    save_dataset,
    save_predictions,
    split_dataset,
    split_manifest,
)
from .errors import (
    ConfigError,
    DataError,
    GeosepError,
    NumericError,
    ParseError,
    StageError,
)
from .evaluation import compare_signals, ece, signal_values, write_reliability_csv
from .pipeline import (
    BenchConfig,
    PipelineConfig,
    run_bench,
    run_pipeline,
    write_json,
)
from .reduction import METHODS, ReductionConfig, fit_reduction, grayscale
from .separation import ScoreTable, batch_separation


def _add_out(p):
    p.add_argument("--out", required=True, help="output directory")


def _add_workers(p):
    p.add_argument(
        "--workers",
        type=int,
        default=None,
        help="worker processes (default: GEOSEP_WORKERS or all cores)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geosep",
        description="Confidence estimation from geometric separation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="split a dataset 60/20/20 by seed")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize", action="store_true")
    _add_out(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("reduce", help="fit a reduction space and apply it")
    p.add_argument("--train", required=True)
    p.add_argument("--queries", action="append", default=[])
    p.add_argument("--reduce", required=True, choices=METHODS, dest="method")
    p.add_argument("--t", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grayscale", action="store_true")
    _add_out(p)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("predict", help="run a built-in model over queries")
    p.add_argument("--train", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--model", choices=("centroid", "knn"), default="centroid")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--k", type=int, default=3)
    _add_out(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("score", help="separation scores for predictions")
    p.add_argument("--train", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--preds", required=True)
    p.add_argument("--metric", choices=("l1", "l2", "linf"), default="l2")
    p.add_argument("--mode", choices=("fast", "exact"), default="fast")
    _add_workers(p)
    _add_out(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("fit", help="fit a calibration curve on scores")
    p.add_argument("--scores", required=True)
    p.add_argument("--fit-bins", type=int, default=50, help="0 = unique values")
    p.add_argument("--curve", choices=("isotonic", "sigmoid"), default="isotonic")
    p.add_argument(
        "--signal", choices=("separation", "model_confidence"), default="separation"
    )
    p.add_argument("--preds", help="prediction file (for --signal model_confidence)")
    _add_out(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("calibrate", help="apply a fitted curve to scores")
    p.add_argument("--scores", required=True)
    p.add_argument("--curve-file", required=True)
    p.add_argument(
        "--signal", choices=("separation", "model_confidence"), default="separation"
    )
    p.add_argument("--preds")
    _add_out(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("ece", help="expected calibration error of confidences")
    p.add_argument("--calibrated", required=True)
    p.add_argument("--ece-bins", type=int, default=15)
    _add_out(p)
    p.set_defaults(func=cmd_ece)

    p = sub.add_parser("compare", help="compare calibrated signals by ECE")
    p.add_argument("--scores", help="score file (single-run mode)")
    p.add_argument("--preds")
    p.add_argument(
        "--curve",
        action="append",
        default=[],
        metavar="SIGNAL=CURVE.json",
        dest="curves",
    )
    p.add_argument(
        "--reports",
        nargs="+",
        default=[],
        help="pipeline report.json files to aggregate across seeds",
    )
    p.add_argument("--ece-bins", type=int, default=15)
    _add_out(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="fast-separation throughput benchmark")
    p.add_argument("--train", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--reduce", choices=METHODS, default="pool", dest="method")
    p.add_argument("--t", default="1,2,4", help="comma-separated t values")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metric", choices=("l1", "l2", "linf"), default="l2")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--limit", type=int, default=None, help="use first N queries")
    p.add_argument("--grayscale", action="store_true")
    _add_workers(p)
    _add_out(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("pipeline", help="full split-to-ECE run")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metric", choices=("l1", "l2", "linf"), default="l2")
    p.add_argument("--mode", choices=("fast", "exact"), default="fast")
    p.add_argument("--model", choices=("centroid", "knn"), default="centroid")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--curve", choices=("isotonic", "sigmoid"), default="isotonic")
    p.add_argument("--fit-bins", type=int, default=50, help="0 = unique values")
    p.add_argument("--ece-bins", type=int, default=15)
    p.add_argument("--reduce", choices=METHODS, default=None, dest="method")
    p.add_argument("--t", type=int, default=2)
    p.add_argument("--grayscale", action="store_true")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--val-preds", help="external validation predictions")
    p.add_argument("--test-preds", help="external test predictions")
    _add_workers(p)
    _add_out(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_split(args) -> int:
    out = _outdir(args)
    ds = load_dataset(args.data, normalize=args.normalize)
    spec = SplitSpec(args.seed)
    train, val, test = split_dataset(ds, spec)
    save_dataset(train, out / "train.gsep")
    save_dataset(val, out / "val.gsep")
    save_dataset(test, out / "test.gsep")
    manifest = split_manifest(ds, spec)
    manifest["config"] = {"data": args.data, "seed": args.seed, "normalize": args.normalize}
    write_json(out / "split.json", manifest)
    print(f"split {ds.n} rows -> {train.n}/{val.n}/{test.n} in {out}")
    return 0


def cmd_reduce(args) -> int:
    out = _outdir(args)
    train = load_dataset(args.train)
    if args.grayscale:
        train = grayscale(train)
    space = fit_reduction(train, ReductionConfig(args.method, args.t, args.seed))
    space.save(out / "space.json")
    reduced = space.training_set(train)
    save_dataset(reduced, out / "train_reduced.gsep")
    for qpath in args.queries:
        q = load_dataset(qpath)
        if args.grayscale:
            q = grayscale(q)
        save_dataset(space.apply(q), out / (Path(qpath).stem + "_reduced.gsep"))
    print(
        f"reduced train scalars {train.n * train.d} -> {reduced.n * reduced.d} "
        f"({args.method}, t={args.t})"
    )
    return 0


def cmd_predict(args) -> int:
    out = _outdir(args)
    train = load_dataset(args.train)
    queries = load_dataset(args.queries)
    if train.d != queries.d:
        raise DataError(f"train d={train.d} but queries d={queries.d}")
    model = fit_model(args.model, train, tau=args.tau, k=args.k)
    preds = model.predictions(queries.features)
    save_predictions(preds, out / "predictions.csv")
    acc = float((preds.labels == queries.labels).mean())
    print(f"predicted {queries.n} rows with {args.model}; accuracy {acc:.4f}")
    return 0


def cmd_score(args) -> int:
    out = _outdir(args)
    train = load_dataset(args.train)
    queries = load_dataset(args.queries)
    preds = load_predictions(args.preds)
    table = batch_separation(
        queries, preds, train, args.mode, args.metric, args.workers
    )
    table.to_csv(out / "scores.csv")
    for row, msg in sorted(table.errors.items()):
        print(f"warning: row {row}: {msg}", file=sys.stderr)
    n_ok = int(table.ok.sum())
    print(f"scored {n_ok}/{len(table)} rows ({args.mode}, {args.metric})")
    return 0


def _signal_from_files(args):
    table = ScoreTable.from_csv(args.scores)
    preds = load_predictions(args.preds) if args.preds else None
    values = signal_values(args.signal, table, preds)
    return table, values


def cmd_fit(args) -> int:
    out = _outdir(args)
    table, values = _signal_from_files(args)
    pairs = bin_scores(values[table.ok], table.correct[table.ok], args.fit_bins)
    curve = fit_isotonic(pairs) if args.curve == "isotonic" else fit_sigmoid(pairs)
    curve.save(out / "curve.json")
    print(f"fitted {args.curve} curve on {len(pairs)} pairs -> {out / 'curve.json'}")
    return 0


def cmd_calibrate(args) -> int:
    out = _outdir(args)
    table, values = _signal_from_files(args)
    curve = CalibrationCurve.load(args.curve_file)
    conf = apply_curve(curve, values)
    with open(out / "calibrated.csv", "w", newline="") as fh:
        fh.write("index,score,confidence,correct\n")
        for i, s, c, corr in zip(table.indices, values, conf, table.correct):
            fh.write("%d,%.9g,%.9g,%d\n" % (i, s, c, corr))
    print(f"calibrated {len(table)} rows -> {out / 'calibrated.csv'}")
    return 0


def _load_calibrated(path):
    import csv as _csv

    conf, correct = [], []
    with open(path, "r", newline="") as fh:
        reader = _csv.DictReader(fh)
        if reader.fieldnames != ["index", "score", "confidence", "correct"]:
            raise ParseError(f"{path}: bad calibrated header {reader.fieldnames}")
        for row in reader:
            conf.append(float(row["confidence"]))
            correct.append(int(row["correct"]))
    if not conf:
        raise ParseError(f"{path}: no calibrated rows")
    return np.array(conf), np.array(correct, dtype=bool)


def cmd_ece(args) -> int:
    out = _outdir(args)
    conf, correct = _load_calibrated(args.calibrated)
    report = ece(conf, correct, args.ece_bins)
    write_reliability_csv(report, out / "reliability.csv")
    write_json(
        out / "ece.json",
        {
            "report_type": "ece",
            "config": {"calibrated": args.calibrated, "ece_bins": args.ece_bins},
            "ece": report.to_json(),
        },
    )
    print(f"ECE {report.ece:.4f}% over {report.n} samples ({report.n_bins} bins)")
    return 0


def cmd_compare(args) -> int:
    out = _outdir(args)
    if bool(args.reports) == bool(args.scores):
        raise ConfigError("compare needs either --scores (with --curve) or --reports")
    if args.reports:
        result = _aggregate_reports(args.reports)
    else:
        if not args.curves:
            raise ConfigError("single-run compare needs at least one --curve")
        table = ScoreTable.from_csv(args.scores)
        preds = load_predictions(args.preds) if args.preds else None
        curves = {}
        for spec in args.curves:
            if "=" not in spec:
                raise ConfigError(f"--curve expects SIGNAL=FILE, got {spec!r}")
            name, path = spec.split("=", 1)
            curves[name] = CalibrationCurve.load(path)
        result = compare_signals(table, preds, curves, args.ece_bins)
    result["report_type"] = "compare"
    result["config"] = {
        "scores": args.scores,
        "preds": args.preds,
        "curves": args.curves,
        "reports": args.reports,
        "ece_bins": args.ece_bins,
    }
    write_json(out / "compare.json", result)
    for name, block in result.get("signals", {}).items():
        print(f"{name}: ECE {block['ece_percent']:.4f}%")
    for name, block in result.get("seed_summary", {}).items():
        print(
            f"{name}: ECE {block['mean']:.4f}% +- {block['ci95_half_width']:.4f} "
            f"over {len(block['eces'])} seeds"
        )
    return 0


def _aggregate_reports(paths) -> dict:
    """Mean and 95% half-width of per-signal ECEs across pipeline reports."""
    import json as _json

    from .evaluation import improvement_percent, seed_interval

    per_signal: dict[str, list[float]] = {}
    seeds = []
    for path in paths:
        payload = _json.loads(Path(path).read_text())
        if payload.get("report_type") != "pipeline":
            raise DataError(f"{path} is not a pipeline report")
        seeds.append(payload["config"]["seed"])
        for name, block in payload["signals"].items():
            per_signal.setdefault(name, []).append(block["ece_percent"])
    counts = {len(v) for v in per_signal.values()}
    if len(counts) != 1:
        raise DataError("signals are not present in every report")
    summary = {}
    for name, eces in per_signal.items():
        mean, half = seed_interval(eces)
        summary[name] = {"eces": eces, "mean": mean, "ci95_half_width": half}
    result = {"n_seeds": len(paths), "seeds": seeds, "seed_summary": summary}
    names = list(per_signal)
    if len(names) > 1:
        primary = "separation" if "separation" in names else names[0]
        result["primary_signal"] = primary
        result["improvement_percent"] = {
            name: improvement_percent(
                summary[primary]["mean"], summary[name]["mean"]
            )
            for name in names
            if name != primary
        }
    return result


def cmd_bench(args) -> int:
    try:
        t_values = tuple(int(v) for v in str(args.t).split(",") if v != "")
    except ValueError:
        raise ConfigError(f"--t expects integers, got {args.t!r}")
    cfg = BenchConfig(
        train=args.train,
        queries=args.queries,
        out=args.out,
        method=args.method,
        t_values=t_values,
        seed=args.seed,
        metric=args.metric,
        workers=args.workers,
        reps=args.reps,
        warmup=args.warmup,
        limit=args.limit,
        to_grayscale=args.grayscale,
    )
    report = run_bench(cfg)
    for block in report["settings"]:
        print(
            f"t={block['t']:>2} ({block['method']}): "
            f"{block['qps_mean']:.1f} q/s +- {block['qps_ci95_half_width']:.1f}"
        )
    return 0


def cmd_pipeline(args) -> int:
    cfg = PipelineConfig(
        data=args.data,
        out=args.out,
        seed=args.seed,
        metric=args.metric,
        mode=args.mode,
        model=args.model,
        tau=args.tau,
        k=args.k,
        curve=args.curve,
        fit_bins=args.fit_bins,
        ece_bins=args.ece_bins,
        reduce=args.method,
        t=args.t,
        to_grayscale=args.grayscale,
        normalize=args.normalize,
        workers=args.workers,
        val_preds=args.val_preds,
        test_preds=args.test_preds,
    )
    report = run_pipeline(cfg)
    for name, block in report["signals"].items():
        print(f"{name}: ECE {block['ece_percent']:.4f}%")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        cause = exc.cause
        if isinstance(cause, ConfigError):
            return 2
        if isinstance(cause, NumericError):
            return 4
        return 3
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (DataError, GeosepError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
