"""Signed geometric separation of queries from a labeled training set.

A query is *safe* when it lies strictly closer to training rows of its
predicted class than to rows of any other class, *dangerous* otherwise
(ties included). Two scores are provided:

* ``fast_separation``: half the gap between the two set distances. Works
  under any supported norm and is always a valid (conservative) radius.
* ``exact_separation``: the min-max perpendicular-bisector radius over
  (near, far) training pairs, L2 only. Always a valid zone that dominates
  the fast score; neighbouring points can truncate the critical bisector
  cell, so it can still undershoot the true maximal radius.

Batch scoring fans out over processes in fixed-size micro-batches so the
output is byte-identical for any worker count.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .base import BaseEstimator, as_matrix, as_vector, check_fitted
from .data import Dataset, Predictions
from .errors import (
    ConfigError,
    DegenerateTriple,
    EmptyClassSet,
    EmptyComplement,
    OrderingError,
    ParseError,
)
from .metric import MetricKind, distance, distances_to_rows

QUERY_BATCH = 32  # micro-batch size; fixed so results never depend on workers

SCORE_COLUMNS = (
    "index",
    "predicted_label",
    "true_label",
    "correct",
    "separation",
    "is_safe",
    "d_same",
    "d_other",
    "mode",
    "metric",
)


@dataclass(frozen=True)
class SeparationScore:
    """Signed zone radius plus the two set distances behind it."""

    value: float
    mode: str
    d_same: float
    d_other: float
    is_safe: bool


@dataclass(frozen=True)
class ClassPartition:
    """Training rows split into the predicted class and everything else."""

    same_class: np.ndarray
    other_class: np.ndarray


def partition(train: Dataset, predicted_label: int) -> ClassPartition:
    """Split training rows by agreement with the predicted label."""
    mask = train.labels == int(predicted_label)
    if not mask.any():
        raise EmptyClassSet(f"no training rows with label {predicted_label}")
    if mask.all():
        raise EmptyComplement(f"all training rows have label {predicted_label}")
    return ClassPartition(train.features[mask], train.features[~mask])


def fast_separation(x, part: ClassPartition, m: MetricKind = MetricKind.L2) -> SeparationScore:
    """Half the gap between other-class and same-class set distances.

    Positive exactly when the query is safe; a tie yields value 0 and the
    dangerous flag.
    """
    m = MetricKind.parse(m)
    if len(part.same_class) == 0:
        raise EmptyClassSet("same-class set is empty")
    if len(part.other_class) == 0:
        raise EmptyComplement("other-class set is empty")
    d_same = float(distances_to_rows(x, part.same_class, m).min())
    d_other = float(distances_to_rows(x, part.other_class, m).min())
    is_safe = d_same < d_other
    return SeparationScore((d_other - d_same) / 2.0, "fast", d_same, d_other, is_safe)


def pairwise_zone(x, x_near, x_far) -> float:
    """Distance from ``x`` to the perpendicular bisector of a point pair.

    Any point within this radius of ``x`` stays strictly closer to
    ``x_near`` than to ``x_far``. Requires d(x, x_near) < d(x, x_far)
    under L2. The squared-distance difference is evaluated in factored
    form, which is exact for collinear near-tie configurations.
    """
    x = as_vector(x, "x")
    x_near = as_vector(x_near, "x_near")
    x_far = as_vector(x_far, "x_far")
    if np.array_equal(x_near, x_far):
        raise DegenerateTriple("x_near and x_far coincide")
    d_near = distance(x, x_near)
    d_far = distance(x, x_far)
    if not d_near < d_far:
        raise OrderingError(
            f"require d(x, x_near) < d(x, x_far); got {d_near} >= {d_far}"
        )
    return float((d_far - d_near) * (d_far + d_near) / (2.0 * distance(x_near, x_far)))


def _max_zone(x, dx_near, dx_far, near_rows, far_rows) -> float:
    """min over far rows of (max over valid near rows of the bisector radius).

    ``dx_near``/``dx_far`` are precomputed distances from ``x``. Near rows
    with d(x, near) >= d(x, far) are excluded from the inner max; at least
    one valid near row always exists because min(dx_near) < min(dx_far).
    """
    best = np.inf
    chunk = max(1, 65536 // max(1, len(near_rows)))
    for lo in range(0, len(far_rows), chunk):
        hi = min(lo + chunk, len(far_rows))
        df = dx_far[lo:hi]
        # pairwise distances between far chunk and all near rows
        diff = far_rows[lo:hi, None, :] - near_rows[None, :, :]
        dz = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        numer = (df[:, None] - dx_near[None, :]) * (df[:, None] + dx_near[None, :])
        valid = (dx_near[None, :] < df[:, None]) & (dz > 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(valid, numer / (2.0 * dz), -np.inf)
        best = min(best, float(vals.max(axis=1).min()))
    return best


def exact_separation(x, part: ClassPartition) -> SeparationScore:
    """Min-max bisector zone radius, signed by the safe/dangerous label.

    L2 only. For safe queries: min over other-class points of the max over
    closer same-class points of the pairwise bisector radius; dangerous
    queries swap the roles and negate. A tie in the two set distances
    yields 0, dangerous.
    """
    if len(part.same_class) == 0:
        raise EmptyClassSet("same-class set is empty")
    if len(part.other_class) == 0:
        raise EmptyComplement("other-class set is empty")
    x = as_vector(x, "x")
    d_to_same = distances_to_rows(x, part.same_class)
    d_to_other = distances_to_rows(x, part.other_class)
    d_same = float(d_to_same.min())
    d_other = float(d_to_other.min())
    if d_same == d_other:
        return SeparationScore(0.0, "exact", d_same, d_other, False)
    if d_same < d_other:
        value = _max_zone(x, d_to_same, d_to_other, part.same_class, part.other_class)
        return SeparationScore(value, "exact", d_same, d_other, True)
    value = _max_zone(x, d_to_other, d_to_same, part.other_class, part.same_class)
    return SeparationScore(-value, "exact", d_same, d_other, False)


@dataclass(frozen=True)
class ScoreTable:
    """Column-oriented batch scoring result, aligned with the input order.

    Rows that failed (for example a predicted label absent from train)
    carry NaN values and an entry in ``errors`` keyed by row position.
    """

    indices: np.ndarray
    predicted: np.ndarray
    true_labels: np.ndarray
    correct: np.ndarray
    values: np.ndarray
    is_safe: np.ndarray
    d_same: np.ndarray
    d_other: np.ndarray
    mode: str
    metric: str
    errors: dict

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def ok(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(SCORE_COLUMNS) + "\n")
            for i in range(len(self)):
                if np.isnan(self.values[i]):
                    continue
                fh.write(
                    "%d,%d,%d,%d,%.9g,%d,%.9g,%.9g,%s,%s\n"
                    % (
                        self.indices[i],
                        self.predicted[i],
                        self.true_labels[i],
                        self.correct[i],
                        self.values[i],
                        self.is_safe[i],
                        self.d_same[i],
                        self.d_other[i],
                        self.mode,
                        self.metric,
                    )
                )

    @staticmethod
    def from_csv(path) -> "ScoreTable":
        path = Path(path)
        if not path.exists():
            raise ParseError(f"no such score file: {path}")
        cols = {name: [] for name in SCORE_COLUMNS}
        with open(path, "r", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != list(SCORE_COLUMNS):
                raise ParseError(f"{path}: bad score header {reader.fieldnames}")
            for row in reader:
                for name in SCORE_COLUMNS:
                    cols[name].append(row[name])
        if not cols["index"]:
            raise ParseError(f"{path}: no score rows")
        modes = set(cols["mode"])
        metrics = set(cols["metric"])
        if len(modes) != 1 or len(metrics) != 1:
            raise ParseError(f"{path}: mixed mode/metric columns")
        return ScoreTable(
            indices=np.array(cols["index"], dtype=np.int64),
            predicted=np.array(cols["predicted_label"], dtype=np.int64),
            true_labels=np.array(cols["true_label"], dtype=np.int64),
            correct=np.array(cols["correct"], dtype=np.int64).astype(bool),
            values=np.array(cols["separation"], dtype=np.float64),
            is_safe=np.array(cols["is_safe"], dtype=np.int64).astype(bool),
            d_same=np.array(cols["d_same"], dtype=np.float64),
            d_other=np.array(cols["d_other"], dtype=np.float64),
            mode=modes.pop(),
            metric=metrics.pop(),
            errors={},
        )


# ---------------------------------------------------------------------------
# batch engine

_SHARED: dict | None = None  # set before forking workers; inherited read-only


def _min_two_distances(Q, preds, train, train_labels, metric, train_sq=None):
    """Per-query (d_same, d_other) against the full training matrix."""
    n = len(train)
    if metric is MetricKind.L2:
        if train_sq is None:
            train_sq = np.einsum("ij,ij->i", train, train)
        qq = np.einsum("ij,ij->i", Q, Q)
        d2 = qq[:, None] + train_sq[None, :] - 2.0 * (Q @ train.T)
        np.maximum(d2, 0.0, out=d2)
        D = np.sqrt(d2, out=d2)
    else:
        D = np.empty((len(Q), n))
        # tile the training rows so the broadcast stays within ~256 MB
        tile = max(1, 33_554_432 // max(1, len(Q) * train.shape[1]))
        for lo in range(0, n, tile):
            hi = min(lo + tile, n)
            diff = np.abs(Q[:, None, :] - train[None, lo:hi, :])
            D[:, lo:hi] = (
                diff.sum(axis=2) if metric is MetricKind.L1 else diff.max(axis=2)
            )
    mask = train_labels[None, :] == preds[:, None]
    d_same = np.where(mask, D, np.inf).min(axis=1)
    d_other = np.where(mask, np.inf, D).min(axis=1)
    return d_same, d_other


def _score_batch(payload, lo, hi):
    train = payload["train"]
    labels = payload["labels"]
    metric = payload["metric"]
    mode = payload["mode"]
    Q = payload["queries"][lo:hi]
    preds = payload["preds"][lo:hi]
    b = hi - lo
    values = np.full(b, np.nan)
    d_same = np.full(b, np.nan)
    d_other = np.full(b, np.nan)
    safe = np.zeros(b, dtype=bool)
    errors = {}
    ds, do = _min_two_distances(Q, preds, train, labels, metric, payload["train_sq"])
    for i in range(b):
        if not np.isfinite(ds[i]):
            errors[lo + i] = f"no training rows with label {preds[i]}"
            continue
        if not np.isfinite(do[i]):
            errors[lo + i] = f"all training rows have label {preds[i]}"
            continue
        d_same[i], d_other[i] = ds[i], do[i]
        safe[i] = ds[i] < do[i]
        if mode == "fast":
            values[i] = (do[i] - ds[i]) / 2.0
        else:
            part = ClassPartition(train[labels == preds[i]], train[labels != preds[i]])
            values[i] = exact_separation(Q[i], part).value
    return values, safe, d_same, d_other, errors


def _worker_batch(bounds):
    return _score_batch(_SHARED, *bounds)


def resolve_workers(workers: int | None) -> int:
    """Explicit value, else GEOSEP_WORKERS, else the machine's core count."""
    if workers is not None:
        if workers < 1:
            raise ConfigError(f"workers must be >= 1, got {workers}")
        return workers
    env = os.environ.get("GEOSEP_WORKERS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"GEOSEP_WORKERS must be an integer, got {env!r}")
        if value < 1:
            raise ConfigError(f"GEOSEP_WORKERS must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


def batch_separation(
    queries: Dataset,
    preds: Predictions,
    train: Dataset,
    mode: str = "fast",
    m: MetricKind = MetricKind.L2,
    workers: int | None = 1,
) -> ScoreTable:
    """Score every prediction against the training set, preserving order.

    Rows are processed in fixed micro-batches of ``QUERY_BATCH`` queries so
    the result is identical for any worker count. Per-row failures (label
    missing from train) are recorded in ``ScoreTable.errors`` and the batch
    continues; an out-of-range prediction index raises ``IndexError``.
    """
    m = MetricKind.parse(m)
    if mode not in ("fast", "exact"):
        raise ConfigError(f"unknown mode {mode!r}; use fast or exact")
    if mode == "exact" and m is not MetricKind.L2:
        raise ConfigError("exact mode requires the l2 metric")
    workers = resolve_workers(workers)
    idx = preds.indices
    if len(idx) == 0:
        empty = np.array([], dtype=np.int64)
        return ScoreTable(
            empty, empty, empty, empty.astype(bool),
            np.array([]), empty.astype(bool), np.array([]), np.array([]),
            mode, m.value, {},
        )
    if idx.min() < 0 or idx.max() >= queries.n:
        raise IndexError(
            f"prediction index out of range [0, {queries.n}): "
            f"[{idx.min()}, {idx.max()}]"
        )

    payload = {
        "train": train.features,
        "labels": train.labels,
        "train_sq": np.einsum("ij,ij->i", train.features, train.features),
        "queries": queries.features[idx],
        "preds": preds.labels,
        "metric": m,
        "mode": mode,
    }
    n = len(idx)
    bounds = [(lo, min(lo + QUERY_BATCH, n)) for lo in range(0, n, QUERY_BATCH)]

    if workers == 1 or len(bounds) == 1:
        parts = [_score_batch(payload, lo, hi) for lo, hi in bounds]
    else:
        global _SHARED
        _SHARED = payload
        try:
            ctx = get_context("fork")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                parts = list(pool.map(_worker_batch, bounds))
        except ValueError:
            # platform without fork: stay in-process
            parts = [_score_batch(payload, lo, hi) for lo, hi in bounds]
        finally:
            _SHARED = None

    values = np.concatenate([p[0] for p in parts])
    safe = np.concatenate([p[1] for p in parts])
    d_same = np.concatenate([p[2] for p in parts])
    d_other = np.concatenate([p[3] for p in parts])
    errors = {}
    for p in parts:
        errors.update(p[4])
    true_labels = queries.labels[idx]
    return ScoreTable(
        indices=idx.copy(),
        predicted=preds.labels.copy(),
        true_labels=true_labels,
        correct=preds.labels == true_labels,
        values=values,
        is_safe=safe,
        d_same=d_same,
        d_other=d_other,
        mode=mode,
        metric=m.value,
        errors=errors,
    )


class SeparationScorer(BaseEstimator):
    """Estimator wrapper: fit on labeled rows, score queries by separation.

    Parameters
    ----------
    mode : "fast" or "exact"
    metric : "l1", "l2", or "linf" (exact mode requires l2)
    workers : process count for batch scoring; None = cores/GEOSEP_WORKERS
    """

    def __init__(self, mode: str = "fast", metric: str = "l2", workers: int | None = 1):
        self.mode = mode
        self.metric = metric
        self.workers = workers

    def fit(self, X, y) -> "SeparationScorer":
        X = as_matrix(X, "X")
        y = np.asarray(y)
        if self.mode not in ("fast", "exact"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "exact" and MetricKind.parse(self.metric) is not MetricKind.L2:
            raise ConfigError("exact mode requires the l2 metric")
        self.train_ = Dataset(X, y.astype(np.int64))
        return self

    def score_samples(self, X, predicted_labels) -> np.ndarray:
        """Signed separation for each row of X under its predicted label."""
        check_fitted(self, "train_")
        X = as_matrix(X, "X")
        preds = Predictions(
            np.arange(len(X)),
            np.asarray(predicted_labels, dtype=np.int64),
            np.full(len(X), np.nan),
        )
        queries = Dataset(X, np.zeros(len(X), dtype=np.int64))
        table = batch_separation(
            queries, preds, self.train_, self.mode, self.metric, self.workers
        )
        if table.errors:
            row, msg = next(iter(table.errors.items()))
            raise EmptyClassSet(f"row {row}: {msg}")
        return table.values

    def score_table(self, queries: Dataset, preds: Predictions) -> ScoreTable:
        check_fitted(self, "train_")
        return batch_separation(
            queries, preds, self.train_, self.mode, self.metric, self.workers
        )
