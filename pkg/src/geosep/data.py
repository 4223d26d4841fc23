"""Dataset and prediction containers, deterministic splitting, and file I/O.

Two on-disk dataset formats are supported:

* CSV with header ``label,f0,...,f{d-1}`` (decimal integer label, decimal
  float features), optionally accompanied by a ``<stem>.meta.json`` sidecar
  carrying ``{"shape": [h, w, c]}``.
* A little-endian binary format: magic ``GSEP``, version u16=1, n u64,
  d u64, n labels as u32, then n*d features as f32.

Predictions travel as CSV with header ``index,predicted_label,
model_confidence`` where the confidence column may be empty.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .base import check_seed
from .errors import DataError, ParseError, RangeError, ShapeError, TooFewRows

_MAGIC = b"GSEP"
_VERSION = 1
_MAX_LABEL = 2**32 - 1

TRAIN_FRACTION = 0.6
VAL_FRACTION = 0.2


@dataclass(frozen=True)
class Dataset:
    """Immutable labeled feature matrix with optional image geometry.

    ``features`` is an (n, d) float64 matrix; ``labels`` holds n dense
    non-negative integer class ids. When ``image_shape`` is set, each row
    is a flattened (h, w, c) image and h*w*c must equal d.
    """

    features: np.ndarray
    labels: np.ndarray
    image_shape: tuple[int, int, int] | None = None
    normalized: bool = False

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if feats.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if feats.shape[0] < 1:
            raise DataError("dataset must contain at least one row")
        if feats.shape[1] < 1:
            raise DataError("dataset must have at least one feature")
        if labels.ndim != 1 or labels.shape[0] != feats.shape[0]:
            raise DataError("labels must be 1-D with one entry per row")
        if not np.issubdtype(labels.dtype, np.integer):
            raise DataError("labels must be integers")
        if labels.min() < 0:
            raise DataError("labels must be non-negative")
        if labels.max() > _MAX_LABEL:
            raise DataError("labels must fit in 32 bits")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", np.ascontiguousarray(labels, dtype=np.int64))
        if self.image_shape is not None:
            h, w, c = (int(v) for v in self.image_shape)
            if h < 1 or w < 1 or c < 1:
                raise ShapeError(f"invalid image shape {self.image_shape}")
            if h * w * c != feats.shape[1]:
                raise ShapeError(
                    f"image shape {h}x{w}x{c} does not match d={feats.shape[1]}"
                )
            object.__setattr__(self, "image_shape", (h, w, c))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    def take(self, indices) -> "Dataset":
        """Row subset in the given index order."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[idx], self.labels[idx], self.image_shape, self.normalized
        )

    def with_features(self, features, image_shape=None) -> "Dataset":
        """Same labels, new feature matrix (used by reductions)."""
        return Dataset(features, self.labels, image_shape, self.normalized)


@dataclass(frozen=True)
class PredictionRecord:
    """One model decision: query row id, class, optional native confidence."""

    index: int
    predicted_label: int
    model_confidence: float | None = None


@dataclass(frozen=True)
class Predictions:
    """Column-oriented prediction table aligned with a query dataset."""

    indices: np.ndarray
    labels: np.ndarray
    confidences: np.ndarray  # NaN where absent

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        lab = np.asarray(self.labels, dtype=np.int64)
        conf = np.asarray(self.confidences, dtype=np.float64)
        if not (idx.shape == lab.shape == conf.shape) or idx.ndim != 1:
            raise DataError("prediction columns must be 1-D and aligned")
        if len(np.unique(idx)) != len(idx):
            raise ParseError("prediction indices must be unique")
        present = ~np.isnan(conf)
        if present.any() and ((conf[present] < 0) | (conf[present] > 1)).any():
            raise RangeError("model_confidence must lie in [0, 1]")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "confidences", conf)

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def has_confidences(self) -> bool:
        return len(self) > 0 and not np.isnan(self.confidences).any()

    def records(self) -> list[PredictionRecord]:
        return [
            PredictionRecord(int(i), int(l), None if np.isnan(c) else float(c))
            for i, l, c in zip(self.indices, self.labels, self.confidences)
        ]

    @staticmethod
    def from_records(records) -> "Predictions":
        recs = list(records)
        return Predictions(
            np.array([r.index for r in recs], dtype=np.int64),
            np.array([r.predicted_label for r in recs], dtype=np.int64),
            np.array(
                [np.nan if r.model_confidence is None else r.model_confidence for r in recs]
            ),
        )


@dataclass(frozen=True)
class SplitSpec:
    """Seeded 60/20/20 split specification."""

    seed: int
    fractions: tuple[float, float, float] = (TRAIN_FRACTION, VAL_FRACTION, 0.2)


def split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic index partition: floor(0.6n) / floor(0.2n) / remainder.

    The permutation is ``numpy.random.default_rng(seed).permutation(n)``
    (PCG64); splits are consecutive slices in permutation order. This exact
    rule is shared with external exporters (see docs/FORMATS.md).
    """
    if n < 5:
        raise TooFewRows(f"need at least 5 rows to split, got {n}")
    perm = np.random.default_rng(check_seed(seed)).permutation(n)
    n_train = int(np.floor(TRAIN_FRACTION * n))
    n_val = int(np.floor(VAL_FRACTION * n))
    return (
        perm[:n_train],
        perm[n_train : n_train + n_val],
        perm[n_train + n_val :],
    )


def split_dataset(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Split into disjoint train/val/test subsets covering all rows."""
    tr, va, te = split_indices(ds.n, spec.seed)
    return ds.take(tr), ds.take(va), ds.take(te)


def split_manifest(ds: Dataset, spec: SplitSpec) -> dict:
    """Fingerprint of a split for cross-tool agreement checks."""
    tr, va, te = split_indices(ds.n, spec.seed)

    def sha(idx: np.ndarray) -> str:
        return hashlib.sha256(idx.astype("<i8").tobytes()).hexdigest()

    return {
        "seed": int(spec.seed),
        "n": int(ds.n),
        "sizes": {"train": len(tr), "val": len(va), "test": len(te)},
        "indices_sha256": {"train": sha(tr), "val": sha(va), "test": sha(te)},
    }


def _meta_path(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


def _read_sidecar_shape(path: Path) -> tuple[int, int, int] | None:
    meta = _meta_path(path)
    if not meta.exists():
        return None
    try:
        payload = json.loads(meta.read_text())
        h, w, c = payload["shape"]
        return (int(h), int(w), int(c))
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"malformed sidecar {meta}: {exc}") from exc


def _normalize(features: np.ndarray) -> np.ndarray:
    lo = features.min(axis=0)
    hi = features.max(axis=0)
    span = hi - lo
    span[span == 0] = 1.0
    return (features - lo) / span


def load_dataset(path, format: str = "auto", normalize: bool = False) -> Dataset:
    """Load a dataset from CSV or binary.

    ``format`` is ``csv``, ``binary``, or ``auto`` (sniff the magic bytes,
    fall back to CSV). With ``normalize`` set, features are min-max scaled
    to [0, 1] per feature after loading.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"no such dataset file: {path}")
    if format == "auto":
        with open(path, "rb") as fh:
            format = "binary" if fh.read(4) == _MAGIC else "csv"
    if format == "binary":
        ds = _load_binary(path)
    elif format == "csv":
        ds = _load_csv(path)
    else:
        raise ParseError(f"unknown dataset format {format!r}")
    if normalize:
        ds = Dataset(_normalize(ds.features), ds.labels, ds.image_shape, True)
    return ds


def save_dataset(ds: Dataset, path, format: str = "auto") -> None:
    """Write a dataset; ``auto`` picks the format from the file suffix."""
    path = Path(path)
    if format == "auto":
        format = "csv" if path.suffix.lower() == ".csv" else "binary"
    if format == "binary":
        _save_binary(ds, path)
    elif format == "csv":
        _save_csv(ds, path)
    else:
        raise ParseError(f"unknown dataset format {format!r}")
    if ds.image_shape is not None:
        _meta_path(path).write_text(
            json.dumps({"shape": list(ds.image_shape)}) + "\n"
        )


def _load_csv(path: Path) -> Dataset:
    with open(path, "r", newline="") as fh:
        header = fh.readline().strip()
        cols = header.split(",")
        if not cols or cols[0] != "label":
            raise ParseError(f"{path}: expected header starting with 'label'")
        d = len(cols) - 1
        expected = ["f%d" % i for i in range(d)]
        if cols[1:] != expected:
            raise ParseError(f"{path}: feature columns must be f0..f{d - 1}")
        if d < 1:
            raise ParseError(f"{path}: dataset needs at least one feature")
        try:
            body = np.loadtxt(fh, delimiter=",", dtype=np.float64, ndmin=2)
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    if body.size == 0:
        raise ParseError(f"{path}: empty dataset")
    if body.shape[1] != d + 1:
        raise ParseError(
            f"{path}: rows have {body.shape[1] - 1} features, header says {d}"
        )
    raw_labels = body[:, 0]
    labels = raw_labels.astype(np.int64)
    if (labels != raw_labels).any() or (labels < 0).any():
        raise ParseError(f"{path}: labels must be non-negative integers")
    if labels.max() > _MAX_LABEL:
        raise ParseError(f"{path}: label exceeds 32 bits")
    return Dataset(body[:, 1:], labels, _read_sidecar_shape(path))


def _save_csv(ds: Dataset, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("label," + ",".join("f%d" % i for i in range(ds.d)) + "\n")
        for label, row in zip(ds.labels, ds.features):
            fh.write("%d," % label + ",".join("%.9g" % v for v in row) + "\n")


def _load_binary(path: Path) -> Dataset:
    blob = path.read_bytes()
    head = struct.calcsize("<4sHQQ")
    if len(blob) < head:
        raise ParseError(f"{path}: truncated header")
    magic, version, n, d = struct.unpack_from("<4sHQQ", blob)
    if magic != _MAGIC:
        raise ParseError(f"{path}: bad magic bytes")
    if version != _VERSION:
        raise ParseError(f"{path}: unsupported version {version}")
    if n == 0:
        raise ParseError(f"{path}: empty dataset")
    if d == 0:
        raise ParseError(f"{path}: dataset needs at least one feature")
    expected = head + 4 * n + 4 * n * d
    if len(blob) != expected:
        raise ParseError(f"{path}: size {len(blob)} != expected {expected}")
    labels = np.frombuffer(blob, dtype="<u4", count=n, offset=head)
    feats = np.frombuffer(blob, dtype="<f4", count=n * d, offset=head + 4 * n)
    return Dataset(
        feats.astype(np.float64).reshape(n, d),
        labels.astype(np.int64),
        _read_sidecar_shape(path),
    )


def _save_binary(ds: Dataset, path: Path) -> None:
    buf = io.BytesIO()
    buf.write(struct.pack("<4sHQQ", _MAGIC, _VERSION, ds.n, ds.d))
    buf.write(ds.labels.astype("<u4").tobytes())
    buf.write(ds.features.astype("<f4").tobytes())
    path.write_bytes(buf.getvalue())


def load_predictions(path) -> Predictions:
    """Read a prediction CSV (``index,predicted_label,model_confidence``)."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"no such prediction file: {path}")
    indices, labels, confs = [], [], []
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "predicted_label", "model_confidence"]:
            raise ParseError(f"{path}: bad prediction header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 columns")
            try:
                indices.append(int(row[0]))
                labels.append(int(row[1]))
                confs.append(float(row[2]) if row[2] != "" else np.nan)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if not indices:
        raise ParseError(f"{path}: no prediction rows")
    return Predictions(np.array(indices), np.array(labels), np.array(confs))


def save_predictions(preds: Predictions, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("index,predicted_label,model_confidence\n")
        for i, l, c in zip(preds.indices, preds.labels, preds.confidences):
            conf = "" if np.isnan(c) else "%.9g" % c
            fh.write("%d,%d,%s\n" % (i, l, conf))
