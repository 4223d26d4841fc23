"""End-to-end pipeline and throughput benchmark orchestration.

Every run writes its intermediate artifacts into the output directory and
finishes with a machine-readable JSON report (no timestamps, sorted keys)
so identical configurations produce byte-identical outputs.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baseline import fit_model
from .calibration import CalibrationCurve, apply_curve, bin_scores, fit_isotonic, fit_sigmoid
from .data import (
    Dataset,
    Predictions,
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
    NumericError,
    ParameterError,
    StageError,
)
from .evaluation import ece, improvement_percent, write_reliability_csv
from .metric import MetricKind
from .reduction import ReductionConfig, fit_reduction, grayscale
from .separation import batch_separation, resolve_workers


def jsonable(obj):
    """Recursively convert numpy scalars/arrays for json.dumps."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, payload: dict) -> None:
    Path(path).write_text(
        json.dumps(jsonable(payload), sort_keys=True, indent=2) + "\n"
    )


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a pipeline run depends on; echoed into the report."""

    data: str
    out: str
    seed: int = 0
    metric: str = "l2"
    mode: str = "fast"
    model: str = "centroid"
    tau: float = 1.0
    k: int = 3
    curve: str = "isotonic"
    fit_bins: int = 50
    ece_bins: int = 15
    reduce: str | None = None
    t: int = 2
    to_grayscale: bool = False
    normalize: bool = False
    workers: int | None = 1
    val_preds: str | None = None
    test_preds: str | None = None

    def validate(self) -> None:
        if self.mode not in ("fast", "exact"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        metric = MetricKind.parse(self.metric)
        if self.mode == "exact" and metric is not MetricKind.L2:
            raise ConfigError("exact mode requires the l2 metric")
        if self.curve not in ("isotonic", "sigmoid"):
            raise ConfigError(f"unknown curve {self.curve!r}")
        if self.ece_bins < 1:
            raise ConfigError(f"--ece-bins must be >= 1, got {self.ece_bins}")
        if self.fit_bins < 0:
            raise ConfigError(f"--fit-bins must be >= 0, got {self.fit_bins}")
        if (self.val_preds is None) != (self.test_preds is None):
            raise ConfigError("--val-preds and --test-preds must be given together")
        if self.reduce is not None:
            ReductionConfig(self.reduce, self.t, self.seed)
        resolve_workers(self.workers)

    def echo(self) -> dict:
        return {
            "data": self.data,
            "out": self.out,
            "seed": self.seed,
            "metric": self.metric,
            "mode": self.mode,
            "model": self.model,
            "tau": self.tau,
            "k": self.k,
            "curve": self.curve,
            "fit_bins": self.fit_bins,
            "ece_bins": self.ece_bins,
            "reduce": self.reduce,
            "t": self.t,
            "grayscale": self.to_grayscale,
            "normalize": self.normalize,
            "workers": self.workers,
            "val_preds": self.val_preds,
            "test_preds": self.test_preds,
        }


def _stage(name):
    """Decorator-free stage wrapper: re-raise with the failing stage name."""

    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if (
                isinstance(exc, Exception)
                and not isinstance(exc, StageError)
            ):
                raise StageError(name, exc) from exc
            return False

    return _Ctx()


def _external_predictions(path, queries: Dataset, name: str) -> Predictions:
    preds = load_predictions(path)
    if len(preds) != queries.n:
        raise DataError(
            f"{name}: prediction file has {len(preds)} rows, split has {queries.n}"
        )
    if preds.indices.min() < 0 or preds.indices.max() >= queries.n:
        raise DataError(f"{name}: prediction indices out of range")
    return preds


def _fit_curve(kind: str, values, correct, fit_bins: int) -> CalibrationCurve:
    pairs = bin_scores(values, correct, fit_bins)
    return fit_isotonic(pairs) if kind == "isotonic" else fit_sigmoid(pairs)


def run_pipeline(cfg: PipelineConfig) -> dict:
    """split -> (reduce) -> predict -> score -> fit -> calibrate -> evaluate.

    Returns the report dict; artifacts and report.json land in cfg.out.
    """
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    report: dict = {"report_type": "pipeline", "config": cfg.echo()}

    with _stage("load"):
        ds = load_dataset(cfg.data, normalize=cfg.normalize)
        if cfg.to_grayscale:
            ds = grayscale(ds)

    with _stage("split"):
        spec = SplitSpec(cfg.seed)
        train, val, test = split_dataset(ds, spec)
        write_json(out / "split.json", split_manifest(ds, spec))
        save_dataset(train, out / "train.gsep")
        save_dataset(val, out / "val.gsep")
        save_dataset(test, out / "test.gsep")
        report["sizes"] = {"train": train.n, "val": val.n, "test": test.n, "d": ds.d}

    with _stage("reduce"):
        if cfg.reduce is not None:
            space = fit_reduction(train, ReductionConfig(cfg.reduce, cfg.t, cfg.seed))
            space.save(out / "space.json")
            sep_train = space.training_set(train)
            val_q = space.apply(val)
            test_q = space.apply(test)
            save_dataset(sep_train, out / "train_reduced.gsep")
            report["reduction"] = {
                "method": cfg.reduce,
                "t": cfg.t,
                "train_scalars": int(sep_train.n * sep_train.d),
            }
        else:
            sep_train, val_q, test_q = train, val, test

    with _stage("predict"):
        if cfg.val_preds is not None:
            preds_val = _external_predictions(cfg.val_preds, val, "val")
            preds_test = _external_predictions(cfg.test_preds, test, "test")
        else:
            model = fit_model(cfg.model, train, tau=cfg.tau, k=cfg.k)
            preds_val = model.predictions(val.features)
            preds_test = model.predictions(test.features)
        save_predictions(preds_val, out / "preds_val.csv")
        save_predictions(preds_test, out / "preds_test.csv")
        acc_val = float((preds_val.labels == val.labels[preds_val.indices]).mean())
        acc_test = float((preds_test.labels == test.labels[preds_test.indices]).mean())
        report["model_accuracy"] = {"val": acc_val, "test": acc_test}

    with _stage("score"):
        scores_val = batch_separation(
            val_q, preds_val, sep_train, cfg.mode, cfg.metric, cfg.workers
        )
        scores_test = batch_separation(
            test_q, preds_test, sep_train, cfg.mode, cfg.metric, cfg.workers
        )
        scores_val.to_csv(out / "scores_val.csv")
        scores_test.to_csv(out / "scores_test.csv")
        if scores_val.errors or scores_test.errors:
            report["score_errors"] = {
                "val": jsonable(scores_val.errors),
                "test": jsonable(scores_test.errors),
            }

    with _stage("fit"):
        ok = scores_val.ok
        curve = _fit_curve(
            cfg.curve, scores_val.values[ok], scores_val.correct[ok], cfg.fit_bins
        )
        curve.save(out / "curve.json")
        raw_curve = None
        if preds_val.has_confidences:
            raw_curve = _fit_curve(
                cfg.curve,
                preds_val.confidences[ok],
                scores_val.correct[ok],
                cfg.fit_bins,
            )
            raw_curve.save(out / "curve_raw.json")

    with _stage("calibrate"):
        ok_t = scores_test.ok
        conf_geo = apply_curve(curve, scores_test.values[ok_t])
        with open(out / "calibrated_test.csv", "w", newline="") as fh:
            fh.write("index,score,confidence,correct\n")
            rows = zip(
                scores_test.indices[ok_t],
                scores_test.values[ok_t],
                conf_geo,
                scores_test.correct[ok_t].astype(int),
            )
            for i, s, c, corr in rows:
                fh.write("%d,%.9g,%.9g,%d\n" % (i, s, c, corr))

    with _stage("evaluate"):
        if not np.isfinite(conf_geo).all():
            raise NumericError("calibrated confidences are not finite")
        rep_geo = ece(conf_geo, scores_test.correct[ok_t], cfg.ece_bins)
        write_reliability_csv(rep_geo, out / "reliability_separation.csv")
        report["signals"] = {"separation": rep_geo.to_json()}
        if raw_curve is not None:
            conf_raw = apply_curve(raw_curve, preds_test.confidences[ok_t])
            rep_raw = ece(conf_raw, scores_test.correct[ok_t], cfg.ece_bins)
            write_reliability_csv(rep_raw, out / "reliability_model_confidence.csv")
            report["signals"]["model_confidence"] = rep_raw.to_json()
            report["improvement_percent"] = {
                "model_confidence": improvement_percent(rep_geo.ece, rep_raw.ece)
            }

    write_json(out / "report.json", report)
    return report


@dataclass(frozen=True)
class BenchConfig:
    """Throughput benchmark configuration."""

    train: str
    queries: str
    out: str
    method: str = "pool"
    t_values: tuple[int, ...] = (1, 2, 4)
    seed: int = 0
    metric: str = "l2"
    workers: int | None = 1
    reps: int = 5
    warmup: int = 1
    limit: int | None = None
    to_grayscale: bool = False

    def validate(self) -> None:
        if self.limit is not None and self.limit < 1:
            raise ParameterError(f"--limit must be >= 1, got {self.limit}")
        if self.reps < 5:
            raise ParameterError(f"--reps must be >= 5, got {self.reps}")
        if self.warmup < 1:
            raise ParameterError(f"--warmup must be >= 1, got {self.warmup}")
        if not self.t_values:
            raise ParameterError("need at least one t value")
        for t in self.t_values:
            if t < 1:
                raise ParameterError(f"t values must be >= 1, got {t}")
            if t > 1:
                ReductionConfig(self.method, t, self.seed)
        MetricKind.parse(self.metric)


_BENCH_METHODOLOGY = (
    "wall-clock time per repetition around the full fast-separation batch "
    "over all queries, after {warmup} untimed warmup repetition(s); "
    "queries/second = n_queries / elapsed; the 95% interval is the normal "
    "approximation over {reps} repetitions"
)


def run_bench(cfg: BenchConfig) -> dict:
    """Measure fast-separation throughput at each reduction setting."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    train = load_dataset(cfg.train)
    queries = load_dataset(cfg.queries)
    if cfg.to_grayscale:
        train = grayscale(train)
        queries = grayscale(queries)
    if cfg.limit is not None:
        queries = queries.take(np.arange(min(cfg.limit, queries.n)))

    preds = Predictions(
        np.arange(queries.n), queries.labels, np.full(queries.n, np.nan)
    )
    settings = []
    for t in cfg.t_values:
        if t == 1:
            sep_train, q = train, queries
        else:
            space = fit_reduction(train, ReductionConfig(cfg.method, t, cfg.seed))
            sep_train = space.training_set(train)
            q = space.apply(queries)
        for _ in range(cfg.warmup):
            batch_separation(q, preds, sep_train, "fast", cfg.metric, cfg.workers)
        elapsed = []
        for _ in range(cfg.reps):
            t0 = time.perf_counter()
            batch_separation(q, preds, sep_train, "fast", cfg.metric, cfg.workers)
            elapsed.append(time.perf_counter() - t0)
        qps = np.array([queries.n / e for e in elapsed])
        half = (
            1.96 * float(qps.std(ddof=1)) / np.sqrt(len(qps)) if len(qps) > 1 else 0.0
        )
        settings.append(
            {
                "t": t,
                "method": "none" if t == 1 else cfg.method,
                "train_rows": sep_train.n,
                "train_scalars": int(sep_train.n * sep_train.d),
                "n_queries": queries.n,
                "reps": cfg.reps,
                "qps_mean": float(qps.mean()),
                "qps_ci95_half_width": half,
                "elapsed_seconds": [float(e) for e in elapsed],
            }
        )

    report = {
        "report_type": "bench",
        "config": {
            "train": cfg.train,
            "queries": cfg.queries,
            "out": cfg.out,
            "method": cfg.method,
            "t_values": list(cfg.t_values),
            "seed": cfg.seed,
            "metric": cfg.metric,
            "workers": cfg.workers,
            "reps": cfg.reps,
            "warmup": cfg.warmup,
            "limit": cfg.limit,
            "grayscale": cfg.to_grayscale,
        },
        "methodology": _BENCH_METHODOLOGY.format(warmup=cfg.warmup, reps=cfg.reps),
        "settings": settings,
    }
    write_json(out / "bench.json", report)
    return report
