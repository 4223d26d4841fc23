"""Distances between points and from a point to a labeled point set.

Three norms are supported: L1, L2, and L-infinity. All arithmetic runs in
float64 regardless of the storage dtype, which keeps the separation-bound
checks clear of float32 accumulation noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .base import as_matrix, as_vector
from .errors import DimensionError, EmptyClassSet, ParameterError


class MetricKind(str, Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"

    @staticmethod
    def parse(value) -> "MetricKind":
        if isinstance(value, MetricKind):
            return value
        try:
            return MetricKind(str(value).lower())
        except ValueError:
            raise ParameterError(f"unknown metric {value!r}; use l1, l2, or linf")


@dataclass(frozen=True)
class SetDistance:
    """Minimum distance from a query to a point set, with its argmin row."""

    distance: float
    argmin_index: int


def distance(a, b, m: MetricKind = MetricKind.L2) -> float:
    """Distance between two vectors under the given norm."""
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    diff = a - b
    m = MetricKind.parse(m)
    if m is MetricKind.L2:
        return float(np.sqrt(np.dot(diff, diff)))
    if m is MetricKind.L1:
        return float(np.abs(diff).sum())
    return float(np.abs(diff).max()) if diff.size else 0.0


def distances_to_rows(x, rows, m: MetricKind = MetricKind.L2) -> np.ndarray:
    """Vector of distances from ``x`` to every row of ``rows``."""
    x = as_vector(x, "x")
    rows = as_matrix(rows, "rows")
    if rows.shape[1] != x.shape[0]:
        raise DimensionError(
            f"dimension mismatch: query d={x.shape[0]}, rows d={rows.shape[1]}"
        )
    diff = rows - x
    m = MetricKind.parse(m)
    if m is MetricKind.L2:
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if m is MetricKind.L1:
        return np.abs(diff).sum(axis=1)
    return np.abs(diff).max(axis=1)


def set_distance(x, rows, m: MetricKind = MetricKind.L2) -> SetDistance:
    """Minimal distance from ``x`` to the set; ties break to the lowest row id."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise EmptyClassSet("point set is empty")
    d = distances_to_rows(x, rows, m)
    idx = int(np.argmin(d))  # argmin returns the first minimum: lowest row id
    return SetDistance(float(d[idx]), idx)


def cross_distances(queries, rows, m: MetricKind = MetricKind.L2) -> np.ndarray:
    """Dense (n_queries, n_rows) distance matrix.

    The L2 path uses the Gram expansion ||q-r||^2 = ||q||^2 + ||r||^2 - 2 q.r
    so batches go through BLAS; L1/Linf fall back to broadcasting.
    """
    Q = as_matrix(queries, "queries")
    R = as_matrix(rows, "rows")
    if Q.shape[1] != R.shape[1]:
        raise DimensionError(
            f"dimension mismatch: queries d={Q.shape[1]}, rows d={R.shape[1]}"
        )
    m = MetricKind.parse(m)
    if m is MetricKind.L2:
        qq = np.einsum("ij,ij->i", Q, Q)
        rr = np.einsum("ij,ij->i", R, R)
        d2 = qq[:, None] + rr[None, :] - 2.0 * (Q @ R.T)
        np.maximum(d2, 0.0, out=d2)
        return np.sqrt(d2, out=d2)
    diff = np.abs(Q[:, None, :] - R[None, :, :])
    return diff.sum(axis=2) if m is MetricKind.L1 else diff.max(axis=2)
