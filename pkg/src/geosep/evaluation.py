"""Expected calibration error and signal-vs-signal comparison reports.

ECE partitions confidences into M equally spaced bins over [0, 1]
(half-open, with the last bin closed at 1.0) and sums the bin-weighted
absolute gaps between per-bin accuracy and per-bin mean confidence. It is
reported in percent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import check_same_length
from .calibration import CalibrationCurve, apply_curve
from .data import Predictions
from .errors import MissingSignal, ParameterError, RangeError

DEFAULT_ECE_BINS = 15


@dataclass(frozen=True)
class EceBin:
    lower: float
    upper: float
    count: int
    accuracy: float
    mean_confidence: float


@dataclass(frozen=True)
class EceReport:
    """Scalar ECE (percent) plus the per-bin reliability breakdown."""

    ece: float
    n_bins: int
    bins: tuple[EceBin, ...]
    n: int

    def to_json(self) -> dict:
        return {
            "ece_percent": self.ece,
            "n_bins": self.n_bins,
            "n": self.n,
            "bins": [
                {
                    "lower": b.lower,
                    "upper": b.upper,
                    "count": b.count,
                    "accuracy": b.accuracy,
                    "mean_confidence": b.mean_confidence,
                }
                for b in self.bins
            ],
        }


def ece(confidences, correct, m: int = DEFAULT_ECE_BINS) -> EceReport:
    """Expected calibration error over M equally spaced bins, in percent."""
    conf = np.asarray(confidences, dtype=np.float64)
    corr = np.asarray(correct, dtype=np.float64)
    n = check_same_length(conf, corr, "confidences", "correct")
    if m < 1:
        raise ParameterError(f"bin count must be >= 1, got {m}")
    if not np.isfinite(conf).all() or (conf < 0).any() or (conf > 1).any():
        raise RangeError("confidences must lie in [0, 1]")
    # bin m covers [m/M, (m+1)/M); confidence 1.0 lands in the last bin
    which = np.minimum((conf * m).astype(np.int64), m - 1)
    bins = []
    total = 0.0
    for b in range(m):
        mask = which == b
        count = int(mask.sum())
        if count:
            acc = float(corr[mask].mean())
            mc = float(conf[mask].mean())
            total += (count / n) * abs(acc - mc)
        else:
            acc = 0.0
            mc = 0.0
        bins.append(EceBin(b / m, (b + 1) / m, count, acc, mc))
    return EceReport(100.0 * total, m, tuple(bins), n)


def reliability_table(report: EceReport) -> list[tuple]:
    """Plot-ready rows (lower, upper, count, accuracy, mean_confidence),
    one per non-empty bin."""
    return [
        (b.lower, b.upper, b.count, b.accuracy, b.mean_confidence)
        for b in report.bins
        if b.count > 0
    ]


def write_reliability_csv(report: EceReport, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("lower,upper,count,accuracy,mean_confidence\n")
        for lower, upper, count, acc, mc in reliability_table(report):
            fh.write("%.9g,%.9g,%d,%.9g,%.9g\n" % (lower, upper, count, acc, mc))


def improvement_percent(ours: float, competitor: float) -> float:
    """Relative ECE improvement of ``ours`` over ``competitor``, in percent."""
    if competitor == 0.0:
        return 0.0 if ours == 0.0 else -float("inf")
    return 100.0 * (competitor - ours) / competitor


def seed_interval(eces) -> tuple[float, float]:
    """Mean and 95% normal-approximation half-width over per-seed ECEs."""
    values = np.asarray(eces, dtype=np.float64)
    if values.ndim != 1 or len(values) == 0:
        raise ParameterError("need a non-empty 1-D list of per-seed ECEs")
    if len(values) == 1:
        return float(values[0]), 0.0
    half = 1.96 * float(values.std(ddof=1)) / np.sqrt(len(values))
    return float(values.mean()), half


def signal_values(name: str, score_table, preds: Predictions | None) -> np.ndarray:
    """Resolve a named signal column from scores or predictions."""
    if name == "separation":
        return score_table.values
    if name == "model_confidence":
        if preds is None or not preds.has_confidences:
            raise MissingSignal("prediction file has no model_confidence values")
        by_index = {int(i): float(c) for i, c in zip(preds.indices, preds.confidences)}
        try:
            return np.array([by_index[int(i)] for i in score_table.indices])
        except KeyError as exc:
            raise MissingSignal(f"prediction missing for query index {exc}") from exc
    raise ParameterError(f"unknown signal {name!r}")


def compare_signals(
    score_table,
    preds: Predictions | None,
    curves: dict[str, CalibrationCurve],
    m: int = DEFAULT_ECE_BINS,
) -> dict:
    """Apply each named curve to its signal and compare the resulting ECEs.

    The first curve is treated as the primary signal; improvement ratios
    are reported for it against every other signal.
    """
    if not curves:
        raise ParameterError("need at least one named curve")
    names = list(curves)
    reports = {}
    for name in names:
        values = signal_values(name, score_table, preds)
        conf = apply_curve(curves[name], values)
        reports[name] = ece(conf, score_table.correct, m)
    primary = names[0]
    result = {
        "primary_signal": primary,
        "n_bins": m,
        "signals": {name: reports[name].to_json() for name in names},
        "improvement_percent": {
            name: improvement_percent(reports[primary].ece, reports[name].ece)
            for name in names
            if name != primary
        },
    }
    return result
