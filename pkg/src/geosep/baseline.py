"""Built-in classifiers so the pipeline runs self-contained.

The nearest-centroid model deliberately misclassifies boundary points,
which produces informative negative-separation rows; its native
confidence is a softmax over negative centroid distances, giving the
raw-signal calibration baseline something to work with.
"""

from __future__ import annotations

import numpy as np

from .base import BaseEstimator, as_matrix, check_fitted
from .data import Dataset, Predictions
from .errors import DimensionError, ParameterError
from .metric import cross_distances


class NearestCentroid(BaseEstimator):
    """Classify by the closest class centroid; ties go to the lowest class id.

    ``tau`` softens the confidence softmax exp(-d_c / tau).
    """

    def __init__(self, tau: float = 1.0):
        self.tau = tau

    def fit(self, X, y) -> "NearestCentroid":
        X = as_matrix(X, "X")
        y = np.asarray(y, dtype=np.int64)
        if self.tau <= 0:
            raise ParameterError(f"tau must be positive, got {self.tau}")
        self.classes_ = np.unique(y)
        self.centroids_ = np.vstack(
            [X[y == c].mean(axis=0) for c in self.classes_]
        )
        return self

    def decision_distances(self, X) -> np.ndarray:
        check_fitted(self, "centroids_")
        X = as_matrix(X, "X")
        if X.shape[1] != self.centroids_.shape[1]:
            raise DimensionError(
                f"expected d={self.centroids_.shape[1]}, got {X.shape[1]}"
            )
        return cross_distances(X, self.centroids_)

    def predict(self, X) -> np.ndarray:
        d = self.decision_distances(X)
        return self.classes_[np.argmin(d, axis=1)]

    def predict_proba(self, X) -> np.ndarray:
        """Softmax over negative centroid distances, rows summing to 1."""
        d = self.decision_distances(X)
        z = -d / self.tau
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predictions(self, X) -> Predictions:
        """Predictions table with the chosen class's softmax confidence."""
        d = self.decision_distances(X)
        pick = np.argmin(d, axis=1)
        proba = self.predict_proba(X)
        return Predictions(
            np.arange(len(pick)),
            self.classes_[pick],
            proba[np.arange(len(pick)), pick],
        )


class KNearest(BaseEstimator):
    """Majority vote over the k nearest training rows (k odd).

    Distance ties prefer the lowest row id; vote ties the lowest class id.
    Confidence is the majority fraction.
    """

    def __init__(self, k: int = 3):
        self.k = k

    def fit(self, X, y) -> "KNearest":
        X = as_matrix(X, "X")
        y = np.asarray(y, dtype=np.int64)
        if self.k % 2 == 0:
            raise ParameterError(f"k must be odd, got {self.k}")
        if self.k < 1 or self.k > len(X):
            raise ParameterError(f"k must be in [1, n={len(X)}], got {self.k}")
        self.X_ = X
        self.y_ = y
        return self

    def _vote(self, X):
        check_fitted(self, "X_")
        X = as_matrix(X, "X")
        d = cross_distances(X, self.X_)
        # stable sort keeps lower row ids first among equal distances
        nearest = np.argsort(d, axis=1, kind="stable")[:, : self.k]
        votes = self.y_[nearest]
        labels = np.empty(len(X), dtype=np.int64)
        fractions = np.empty(len(X))
        for i, row in enumerate(votes):
            counts = np.bincount(row)
            labels[i] = int(np.argmax(counts))  # first max: lowest class id
            fractions[i] = counts[labels[i]] / self.k
        return labels, fractions

    def predict(self, X) -> np.ndarray:
        return self._vote(X)[0]

    def predictions(self, X) -> Predictions:
        labels, fractions = self._vote(X)
        return Predictions(np.arange(len(labels)), labels, fractions)


def fit_model(kind: str, train: Dataset, tau: float = 1.0, k: int = 3):
    """CLI helper: construct and fit a built-in model by name."""
    if kind == "centroid":
        return NearestCentroid(tau=tau).fit(train.features, train.labels)
    if kind == "knn":
        return KNearest(k=k).fit(train.features, train.labels)
    raise ParameterError(f"unknown model {kind!r}; use centroid or knn")
