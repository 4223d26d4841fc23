"""Turn scalar uncertainty scores into calibrated probabilities.

Validation-set scores are grouped into equal-frequency bins, each bin
contributing a (mean score, empirical accuracy, count) pair, and a curve
is fitted through the pairs: either a weighted non-decreasing step-free
fit via pool-adjacent-violators, or a weighted least-squares logistic.
Fitted curves serialize to JSON so fitting and application can run as
separate CLI invocations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .base import BaseEstimator, check_fitted, check_same_length
from .errors import EmptyInput, NumericError, ParameterError, ParseError

_CONF_EPS = 1e-12  # clamp for logit of 0/1 accuracies in constant curves


@dataclass(frozen=True)
class FitPair:
    """One fitting observation: bin-mean score, accuracy, and sample count."""

    score: float
    accuracy: float
    weight: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise NumericError(f"non-finite score {self.score}")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ParameterError(f"accuracy {self.accuracy} outside [0, 1]")
        if self.weight < 1:
            raise ParameterError(f"weight must be >= 1, got {self.weight}")


@dataclass(frozen=True)
class CalibrationCurve:
    """Monotone (isotonic knots) or logistic map from score to probability.

    Isotonic curves interpolate linearly between knots and clamp to the
    endpoint probabilities outside the knot range. Sigmoid curves evaluate
    1 / (1 + exp(-(a*s + b))) everywhere.
    """

    kind: str
    knot_scores: np.ndarray | None = None
    knot_probs: np.ndarray | None = None
    a: float | None = None
    b: float | None = None
    extrapolation: str = "clamp"

    def __post_init__(self):
        if self.kind == "isotonic":
            s = np.asarray(self.knot_scores, dtype=np.float64)
            p = np.asarray(self.knot_probs, dtype=np.float64)
            if s.ndim != 1 or s.shape != p.shape or len(s) == 0:
                raise ParameterError("knots must be aligned non-empty 1-D arrays")
            if len(s) > 1 and not (np.diff(s) > 0).all():
                raise ParameterError("knot scores must be strictly increasing")
            if len(p) > 1 and (np.diff(p) < 0).any():
                raise ParameterError("knot probabilities must be non-decreasing")
            if (p < 0).any() or (p > 1).any():
                raise ParameterError("knot probabilities must lie in [0, 1]")
            object.__setattr__(self, "knot_scores", s)
            object.__setattr__(self, "knot_probs", p)
        elif self.kind == "sigmoid":
            if self.a is None or self.b is None:
                raise ParameterError("sigmoid curve needs a and b")
        else:
            raise ParameterError(f"unknown curve kind {self.kind!r}")

    def __call__(self, scores):
        return apply_curve(self, scores)

    def to_json(self) -> dict:
        if self.kind == "isotonic":
            return {
                "kind": "isotonic",
                "knots": [
                    {"s": float(s), "p": float(p)}
                    for s, p in zip(self.knot_scores, self.knot_probs)
                ],
                "extrapolation": self.extrapolation,
            }
        return {"kind": "sigmoid", "a": float(self.a), "b": float(self.b)}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True) + "\n")

    @staticmethod
    def from_json(payload: dict) -> "CalibrationCurve":
        kind = payload.get("kind")
        if kind == "isotonic":
            knots = payload["knots"]
            return CalibrationCurve(
                "isotonic",
                knot_scores=np.array([k["s"] for k in knots]),
                knot_probs=np.array([k["p"] for k in knots]),
                extrapolation=payload.get("extrapolation", "clamp"),
            )
        if kind == "sigmoid":
            return CalibrationCurve("sigmoid", a=float(payload["a"]), b=float(payload["b"]))
        raise ParseError(f"unknown curve kind {kind!r}")

    @staticmethod
    def load(path) -> "CalibrationCurve":
        path = Path(path)
        if not path.exists():
            raise ParseError(f"no such curve file: {path}")
        try:
            return CalibrationCurve.from_json(json.loads(path.read_text()))
        except (KeyError, ValueError, TypeError) as exc:
            raise ParseError(f"{path}: malformed curve file: {exc}") from exc


def bin_scores(scores, correct, n_bins: int = 50) -> list[FitPair]:
    """Equal-frequency binning of scores against correctness.

    Scores are sorted; bins hold counts differing by at most one. Each bin
    yields (mean score, fraction correct, count). ``n_bins=0`` switches to
    one pair per unique score value. Adjacent pairs whose mean scores
    collide are merged by weighted average.
    """
    scores = np.asarray(scores, dtype=np.float64)
    correct = np.asarray(correct, dtype=np.float64)
    check_same_length(scores, correct, "scores", "correct")
    if n_bins < 0:
        raise ParameterError(f"n_bins must be >= 0, got {n_bins}")
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    c = correct[order]
    if n_bins == 0:
        uniq, start = np.unique(s, return_index=True)
        bounds = list(start) + [len(s)]
        raw = [
            (float(uniq[i]), float(c[bounds[i] : bounds[i + 1]].mean()), bounds[i + 1] - bounds[i])
            for i in range(len(uniq))
        ]
    else:
        chunks = np.array_split(np.arange(len(s)), n_bins)
        raw = [
            (float(s[ch].mean()), float(c[ch].mean()), len(ch))
            for ch in chunks
            if len(ch) > 0
        ]
    merged: list[list] = []
    for score, acc, count in raw:
        if merged and merged[-1][0] == score:
            prev = merged[-1]
            total = prev[2] + count
            prev[1] = (prev[1] * prev[2] + acc * count) / total
            prev[2] = total
        else:
            merged.append([score, acc, count])
    return [FitPair(sc, min(max(ac, 0.0), 1.0), ct) for sc, ac, ct in merged]


def _pava(y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted least-squares non-decreasing fit by pooling violators."""
    means: list[float] = []
    weights: list[float] = []
    counts: list[int] = []
    for yi, wi in zip(y, w):
        means.append(float(yi))
        weights.append(float(wi))
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            wt = weights[-2] + weights[-1]
            mu = (means[-2] * weights[-2] + means[-1] * weights[-1]) / wt
            means[-2:] = [mu]
            weights[-2:] = [wt]
            counts[-2:] = [counts[-2] + counts[-1]]
    fitted = np.empty(len(y))
    pos = 0
    for mu, cnt in zip(means, counts):
        fitted[pos : pos + cnt] = mu
        pos += cnt
    return fitted


def _sorted_merged(pairs: list[FitPair]):
    if not pairs:
        raise EmptyInput("no fit pairs")
    ordered = sorted(pairs, key=lambda p: p.score)
    scores: list[float] = []
    accs: list[float] = []
    weights: list[float] = []
    for p in ordered:
        if scores and scores[-1] == p.score:
            total = weights[-1] + p.weight
            accs[-1] = (accs[-1] * weights[-1] + p.accuracy * p.weight) / total
            weights[-1] = total
        else:
            scores.append(p.score)
            accs.append(p.accuracy)
            weights.append(p.weight)
    return np.array(scores), np.array(accs), np.array(weights)


def fit_isotonic(pairs: list[FitPair]) -> CalibrationCurve:
    """Non-decreasing weighted least-squares fit through the pairs.

    The fitted value at each input score is its pooled block mean; the
    curve keeps one knot per distinct score.
    """
    scores, accs, weights = _sorted_merged(pairs)
    fitted = np.clip(_pava(accs, weights), 0.0, 1.0)
    return CalibrationCurve("isotonic", knot_scores=scores, knot_probs=fitted)


def _logistic(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def fit_sigmoid(
    pairs: list[FitPair], max_iter: int = 200, tol: float = 1e-8
) -> CalibrationCurve:
    """Weighted least-squares logistic fit p(s) = 1/(1+exp(-(a*s+b))).

    Deterministic damped Gauss-Newton from (a, b) = (1, 0) with a fixed
    iteration cap. If every accuracy is identical the fit is degenerate
    and a constant curve (a = 0) is returned instead.
    """
    scores, accs, weights = _sorted_merged(pairs)
    if np.all(accs == accs[0]):
        # covers identical accuracies and the single-distinct-score case
        p = min(max(float(accs[0]), _CONF_EPS), 1.0 - _CONF_EPS)
        return CalibrationCurve("sigmoid", a=0.0, b=float(np.log(p / (1.0 - p))))

    sw = np.sqrt(weights)
    theta = np.array([1.0, 0.0])

    def cost_resid(th):
        p = _logistic(th[0] * scores + th[1])
        r = sw * (p - accs)
        return float(r @ r), r, p

    cost, r, p = cost_resid(theta)
    lam = 1e-3
    for _ in range(max_iter):
        g = sw * p * (1.0 - p)
        J = np.column_stack([g * scores, g])
        JtJ = J.T @ J
        Jtr = J.T @ r
        step = None
        for _ in range(50):
            try:
                delta = np.linalg.solve(JtJ + lam * np.eye(2), -Jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            new_cost, new_r, new_p = cost_resid(theta + delta)
            if new_cost <= cost:
                step = delta
                theta = theta + delta
                cost, r, p = new_cost, new_r, new_p
                lam = max(lam / 3.0, 1e-12)
                break
            lam *= 10.0
        if step is None or np.abs(step).max() < tol:
            break
    if not np.isfinite(theta).all():
        raise NumericError("sigmoid fit diverged")
    return CalibrationCurve("sigmoid", a=float(theta[0]), b=float(theta[1]))


def apply_curve(curve: CalibrationCurve, scores):
    """Evaluate a fitted curve; scalar in, scalar out; array in, array out."""
    arr = np.asarray(scores, dtype=np.float64)
    if curve.kind == "isotonic":
        # np.interp clamps to the endpoint values outside the knot range
        out = np.interp(arr, curve.knot_scores, curve.knot_probs)
    else:
        out = _logistic(curve.a * arr + curve.b)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.isscalar(scores) else out


class _CurveCalibrator(BaseEstimator):
    def fit(self, scores, correct):
        pairs = bin_scores(scores, correct, self.n_bins)
        self.curve_ = self._fit_curve(pairs)
        return self

    def predict(self, scores):
        check_fitted(self, "curve_")
        return apply_curve(self.curve_, scores)

    transform = predict


class IsotonicCalibrator(_CurveCalibrator):
    """Bin scores against correctness and fit a monotone curve."""

    def __init__(self, n_bins: int = 50):
        self.n_bins = n_bins

    def _fit_curve(self, pairs):
        return fit_isotonic(pairs)


class SigmoidCalibrator(_CurveCalibrator):
    """Bin scores against correctness and fit a logistic curve."""

    def __init__(self, n_bins: int = 50):
        self.n_bins = n_bins

    def _fit_curve(self, pairs):
        return fit_sigmoid(pairs)
