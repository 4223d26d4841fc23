"""Data reductions that shrink stored scalars by a factor of t^2.

Pixel-space methods (``pool``, ``maxpool``, ``pca``, ``rbi``, ``randpix``)
reduce the per-row dimensionality and must be applied to queries through
the same fitted ``ReducedSpace``. Set methods (``kmeans``, ``randset``)
shrink the training set itself and leave queries untouched. ``grayscale``
is a standalone 3-to-1 channel transform applied before any of them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .base import BaseEstimator, check_fitted, check_seed
from .data import Dataset, load_dataset, save_dataset
from .errors import (
    DimensionError,
    ParameterError,
    ParseError,
    ReductionTooAggressive,
    ShapeError,
    TooFewRows,
)

PIXEL_METHODS = ("pool", "maxpool", "pca", "rbi", "randpix")
SET_METHODS = ("kmeans", "randset")
METHODS = PIXEL_METHODS + SET_METHODS

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])  # ITU-R 601 luma

KMEANS_MAX_ITER = 300
KMEANS_REL_TOL = 1e-4


@dataclass(frozen=True)
class ReductionConfig:
    """Which reduction to run, its strength t, and the sampling seed."""

    method: str
    t: int
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(
                f"unknown reduction {self.method!r}; choose from {', '.join(METHODS)}"
            )
        if self.t < 2:
            raise ParameterError(f"reduction parameter t must be >= 2, got {self.t}")
        check_seed(self.seed)


def grayscale(ds: Dataset) -> Dataset:
    """Collapse (h, w, 3) images to single-channel luma."""
    if ds.image_shape is None:
        raise ShapeError("grayscale needs image shape metadata")
    h, w, c = ds.image_shape
    if c != 3:
        raise ShapeError(f"grayscale needs 3 channels, got {c}")
    imgs = ds.features.reshape(ds.n, h, w, 3)
    gray = imgs @ GRAY_WEIGHTS
    return ds.with_features(gray.reshape(ds.n, h * w), (h, w, 1))


def _require_shape(ds: Dataset, op: str) -> tuple[int, int, int]:
    if ds.image_shape is None:
        raise ShapeError(f"{op} needs image shape metadata")
    return ds.image_shape


def pool(ds: Dataset, t: int, fn: str = "avg") -> Dataset:
    """Replace each t x t patch per channel with its average or maximum."""
    if t < 1:
        raise ParameterError(f"t must be >= 1, got {t}")
    if fn not in ("avg", "max"):
        raise ParameterError(f"pool fn must be avg or max, got {fn!r}")
    h, w, c = _require_shape(ds, "pool")
    if h % t or w % t:
        raise ShapeError(
            f"pool with t={t} requires height and width divisible by {t}; "
            f"got {h}x{w}"
        )
    patches = ds.features.reshape(ds.n, h // t, t, w // t, t, c)
    out = patches.mean(axis=(2, 4)) if fn == "avg" else patches.max(axis=(2, 4))
    return ds.with_features(out.reshape(ds.n, -1), (h // t, w // t, c))


def resize_bilinear(ds: Dataset, t: int) -> Dataset:
    """Downscale images to (floor(h/t), floor(w/t)) with half-pixel centers
    and edge clamping."""
    if t < 1:
        raise ParameterError(f"t must be >= 1, got {t}")
    h, w, c = _require_shape(ds, "resize_bilinear")
    if h < t or w < t:
        raise ShapeError(f"cannot resize {h}x{w} down by t={t}")
    out_h, out_w = h // t, w // t
    if t == 1:
        return ds
    return ds.with_features(
        _bilinear(ds.features, (h, w, c), (out_h, out_w)), (out_h, out_w, c)
    )


def _bilinear(rows: np.ndarray, in_shape, out_hw) -> np.ndarray:
    h, w, c = in_shape
    out_h, out_w = out_hw
    imgs = rows.reshape(len(rows), h, w, c)
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0f = np.floor(ys)
    x0f = np.floor(xs)
    fy = (ys - y0f)[None, :, None, None]
    fx = (xs - x0f)[None, None, :, None]
    y0 = np.clip(y0f, 0, h - 1).astype(np.int64)
    y1 = np.clip(y0f + 1, 0, h - 1).astype(np.int64)
    x0 = np.clip(x0f, 0, w - 1).astype(np.int64)
    x1 = np.clip(x0f + 1, 0, w - 1).astype(np.int64)
    top = imgs[:, y0][:, :, x0] * (1 - fx) + imgs[:, y0][:, :, x1] * fx
    bot = imgs[:, y1][:, :, x0] * (1 - fx) + imgs[:, y1][:, :, x1] * fx
    out = top * (1 - fy) + bot * fy
    return out.reshape(len(rows), out_h * out_w * c)


def _reduced_dim(d: int, t: int) -> int:
    k = d // (t * t)
    if k < 1:
        raise ReductionTooAggressive(f"t={t} leaves no features out of d={d}")
    return k


@dataclass(frozen=True)
class ReducedSpace:
    """Fitted parameters that map any query into the reduced representation.

    For set methods the space instead carries the reduced labeled training
    set and leaves query rows untouched.
    """

    method: str
    t: int
    seed: int = 0
    in_shape: tuple[int, int, int] | None = None
    out_shape: tuple[int, int, int] | None = None
    in_dim: int | None = None
    pixel_indices: np.ndarray | None = None
    mean: np.ndarray | None = None
    basis: np.ndarray | None = None
    reduced_set: Dataset | None = None

    def map_rows(self, X: np.ndarray) -> np.ndarray:
        """Map raw feature rows into the reduced space (identity for set
        methods)."""
        X = np.asarray(X, dtype=np.float64)
        if self.method in SET_METHODS:
            return X
        if self.method in ("pool", "maxpool"):
            h, w, c = self.in_shape
            if X.shape[1] != h * w * c:
                raise DimensionError(f"expected d={h * w * c}, got {X.shape[1]}")
            t = self.t
            patches = X.reshape(len(X), h // t, t, w // t, t, c)
            out = (
                patches.mean(axis=(2, 4))
                if self.method == "pool"
                else patches.max(axis=(2, 4))
            )
            return out.reshape(len(X), -1)
        if self.method == "rbi":
            h, w, c = self.in_shape
            if X.shape[1] != h * w * c:
                raise DimensionError(f"expected d={h * w * c}, got {X.shape[1]}")
            return _bilinear(X, self.in_shape, self.out_shape[:2])
        if self.method == "pca":
            if X.shape[1] != self.in_dim:
                raise DimensionError(f"expected d={self.in_dim}, got {X.shape[1]}")
            return (X - self.mean) @ self.basis.T
        if self.method == "randpix":
            if X.shape[1] != self.in_dim:
                raise DimensionError(f"expected d={self.in_dim}, got {X.shape[1]}")
            return X[:, self.pixel_indices]
        raise ParameterError(f"unknown method {self.method!r}")

    def apply(self, ds: Dataset) -> Dataset:
        """Map a whole dataset; labels ride along unchanged."""
        if self.method in SET_METHODS:
            return ds
        return ds.with_features(self.map_rows(ds.features), self.out_shape)

    def training_set(self, train: Dataset) -> Dataset:
        """The training set to compute separations against."""
        if self.method in SET_METHODS:
            return self.reduced_set
        return self.apply(train)

    # -- persistence: JSON metadata plus binary appendices ------------------

    def save(self, path) -> None:
        path = Path(path)
        meta = {"method": self.method, "t": self.t, "seed": self.seed}
        if self.method in ("pool", "maxpool", "rbi"):
            meta["in_shape"] = list(self.in_shape)
            meta["out_shape"] = list(self.out_shape)
        elif self.method == "randpix":
            meta["in_dim"] = self.in_dim
            meta["indices"] = [int(i) for i in self.pixel_indices]
        elif self.method == "pca":
            blob = path.with_suffix(".bin")
            meta["in_dim"] = self.in_dim
            meta["k"] = int(self.basis.shape[0])
            meta["binary"] = blob.name
            with open(blob, "wb") as fh:
                fh.write(self.mean.astype("<f4").tobytes())
                fh.write(self.basis.astype("<f4").tobytes())
        else:
            data = path.with_suffix(".data.gsep")
            meta["dataset"] = data.name
            save_dataset(self.reduced_set, data, format="binary")
        path.write_text(json.dumps(meta, sort_keys=True) + "\n")

    @staticmethod
    def load(path) -> "ReducedSpace":
        path = Path(path)
        if not path.exists():
            raise ParseError(f"no such space file: {path}")
        try:
            meta = json.loads(path.read_text())
            method = meta["method"]
            t = int(meta["t"])
            seed = int(meta["seed"])
            if method in ("pool", "maxpool", "rbi"):
                return ReducedSpace(
                    method,
                    t,
                    seed,
                    in_shape=tuple(meta["in_shape"]),
                    out_shape=tuple(meta["out_shape"]),
                )
            if method == "randpix":
                return ReducedSpace(
                    method,
                    t,
                    seed,
                    in_dim=int(meta["in_dim"]),
                    pixel_indices=np.array(meta["indices"], dtype=np.int64),
                )
            if method == "pca":
                d = int(meta["in_dim"])
                k = int(meta["k"])
                raw = np.frombuffer(
                    (path.parent / meta["binary"]).read_bytes(), dtype="<f4"
                )
                if len(raw) != d + k * d:
                    raise ParseError("pca appendix size mismatch")
                return ReducedSpace(
                    method,
                    t,
                    seed,
                    in_dim=d,
                    mean=raw[:d].astype(np.float64),
                    basis=raw[d:].astype(np.float64).reshape(k, d),
                )
            if method in SET_METHODS:
                return ReducedSpace(
                    method,
                    t,
                    seed,
                    reduced_set=load_dataset(path.parent / meta["dataset"], "binary"),
                )
            raise ParseError(f"unknown method {method!r}")
        except (KeyError, ValueError, TypeError) as exc:
            raise ParseError(f"{path}: malformed space file: {exc}") from exc


def pca_fit(train: Dataset, t: int) -> ReducedSpace:
    """Principal directions of the training rows, keeping floor(d/t^2).

    Directions are ordered by descending eigenvalue; each one's sign is
    fixed so its largest-magnitude entry is positive.
    """
    if train.n < 2:
        raise TooFewRows("pca needs at least 2 training rows")
    k = _reduced_dim(train.d, t)
    mean = train.features.mean(axis=0)
    centered = train.features - mean
    cov = (centered.T @ centered) / (train.n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    comps = eigvecs[:, ::-1][:, :k].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return ReducedSpace("pca", t, in_dim=train.d, mean=mean, basis=comps)


def pca_project(space: ReducedSpace, ds: Dataset) -> Dataset:
    return space.apply(ds)


def sample_pixels(train: Dataset, t: int, seed: int) -> ReducedSpace:
    """Keep floor(d/t^2) distinct feature indices drawn by the seed."""
    k = _reduced_dim(train.d, t)
    rng = np.random.default_rng(check_seed(seed))
    idx = np.sort(rng.choice(train.d, size=k, replace=False))
    return ReducedSpace("randpix", t, seed, in_dim=train.d, pixel_indices=idx)


def sample_set(train: Dataset, t: int, seed: int) -> ReducedSpace:
    """Keep a uniform floor(n/t^2)-row sample of the training set."""
    k = train.n // (t * t)
    if k < 1:
        raise ReductionTooAggressive(f"t={t} leaves no rows out of n={train.n}")
    rng = np.random.default_rng(check_seed(seed))
    idx = np.sort(rng.choice(train.n, size=k, replace=False))
    return ReducedSpace("randset", t, seed, reduced_set=train.take(idx))


def _kmeans(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded k-means++ plus Lloyd iterations; returns k centroids."""
    n = len(X)
    if k >= n:
        return X.copy()
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[int(rng.integers(n))]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # remaining points all coincide with chosen centers
            idx = int(np.argmin(d2))
        centers[j] = X[idx]
        np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1), out=d2)

    prev_inertia = np.inf
    for _ in range(KMEANS_MAX_ITER):
        cc = np.einsum("ij,ij->i", centers, centers)
        d2all = cc[None, :] - 2.0 * (X @ centers.T)
        assign = np.argmin(d2all, axis=1)
        costs = np.einsum("ij,ij->i", X, X) + d2all[np.arange(n), assign]
        np.maximum(costs, 0.0, out=costs)
        inertia = float(costs.sum())
        sums = np.zeros_like(centers)
        np.add.at(sums, assign, X)
        counts = np.bincount(assign, minlength=k).astype(np.float64)
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(costs))
            sums[j] = X[far]
            counts[j] = 1.0
            costs[far] = 0.0
        centers = sums / counts[:, None]
        if prev_inertia <= inertia or (prev_inertia - inertia) < KMEANS_REL_TOL * prev_inertia:
            break
        prev_inertia = inertia
    return centers


def kmeans_reduce(train: Dataset, t: int, seed: int) -> ReducedSpace:
    """Per-class k-means condensation with k_c = max(1, floor(n_c/t^2)).

    Centroids inherit their class label, so every class keeps at least one
    representative.
    """
    feats = []
    labels = []
    for c in np.unique(train.labels):
        Xc = train.features[train.labels == c]
        k_c = max(1, len(Xc) // (t * t))
        rng = np.random.default_rng([check_seed(seed), int(c)])
        centers = _kmeans(Xc, k_c, rng)
        feats.append(centers)
        labels.append(np.full(len(centers), c, dtype=np.int64))
    reduced = Dataset(np.vstack(feats), np.concatenate(labels))
    return ReducedSpace("kmeans", t, seed, reduced_set=reduced)


def fit_reduction(train: Dataset, cfg: ReductionConfig) -> ReducedSpace:
    """Build the ReducedSpace for a configuration against a training set."""
    if cfg.method in ("pool", "maxpool"):
        h, w, c = _require_shape(train, cfg.method)
        if h % cfg.t or w % cfg.t:
            raise ShapeError(
                f"{cfg.method} with t={cfg.t} requires height and width "
                f"divisible by {cfg.t}; got {h}x{w}"
            )
        return ReducedSpace(
            cfg.method,
            cfg.t,
            cfg.seed,
            in_shape=(h, w, c),
            out_shape=(h // cfg.t, w // cfg.t, c),
        )
    if cfg.method == "rbi":
        h, w, c = _require_shape(train, "rbi")
        if h < cfg.t or w < cfg.t:
            raise ShapeError(f"cannot resize {h}x{w} down by t={cfg.t}")
        return ReducedSpace(
            "rbi",
            cfg.t,
            cfg.seed,
            in_shape=(h, w, c),
            out_shape=(h // cfg.t, w // cfg.t, c),
        )
    if cfg.method == "pca":
        return pca_fit(train, cfg.t)
    if cfg.method == "randpix":
        return sample_pixels(train, cfg.t, cfg.seed)
    if cfg.method == "kmeans":
        return kmeans_reduce(train, cfg.t, cfg.seed)
    return sample_set(train, cfg.t, cfg.seed)


class Reducer(BaseEstimator):
    """Estimator facade over ``fit_reduction``: fit on a training Dataset,
    transform any Dataset through the fitted space."""

    def __init__(self, method: str = "pool", t: int = 2, seed: int = 0):
        self.method = method
        self.t = t
        self.seed = seed

    def fit(self, ds: Dataset, y=None) -> "Reducer":
        self.space_ = fit_reduction(ds, ReductionConfig(self.method, self.t, self.seed))
        self.train_ = self.space_.training_set(ds)
        return self

    def transform(self, ds: Dataset) -> Dataset:
        check_fitted(self, "space_")
        return self.space_.apply(ds)

    def fit_transform(self, ds: Dataset, y=None) -> Dataset:
        return self.fit(ds).transform(ds)
