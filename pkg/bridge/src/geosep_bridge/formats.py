"""Standalone readers/writers for the toolkit's file formats.

Implements docs/FORMATS.md from the main repository without importing the
toolkit itself: the bridge and the toolkit agree purely through bytes on
disk (and the shared split rule below).
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"GSEP"
VERSION = 1


class BridgeError(Exception):
    """Bridge-side export failure (bad inputs or split disagreement)."""


def load_dataset(path):
    """Read a CSV or binary dataset; returns (features f64, labels i64, shape)."""
    path = Path(path)
    if not path.exists():
        raise BridgeError(f"no such dataset: {path}")
    with open(path, "rb") as fh:
        is_binary = fh.read(4) == MAGIC
    shape = None
    meta = path.with_name(path.stem + ".meta.json")
    if meta.exists():
        shape = tuple(json.loads(meta.read_text())["shape"])
    if is_binary:
        blob = path.read_bytes()
        head = struct.calcsize("<4sHQQ")
        _, version, n, d = struct.unpack_from("<4sHQQ", blob)
        if version != VERSION or n == 0:
            raise BridgeError(f"{path}: unsupported or empty dataset")
        labels = np.frombuffer(blob, dtype="<u4", count=n, offset=head)
        feats = np.frombuffer(blob, dtype="<f4", count=n * d, offset=head + 4 * n)
        return (
            feats.astype(np.float64).reshape(n, d),
            labels.astype(np.int64),
            shape,
        )
    rows = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.float64, ndmin=2)
    if rows.size == 0:
        raise BridgeError(f"{path}: empty dataset")
    return rows[:, 1:], rows[:, 0].astype(np.int64), shape


def save_dataset(features, labels, path, shape=None) -> None:
    """Write the binary dataset format (plus the shape sidecar if given)."""
    path = Path(path)
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, d = features.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sHQQ", MAGIC, VERSION, n, d))
        fh.write(labels.astype("<u4").tobytes())
        fh.write(features.astype("<f4").tobytes())
    if shape is not None:
        path.with_name(path.stem + ".meta.json").write_text(
            json.dumps({"shape": list(shape)}) + "\n"
        )


def save_predictions(indices, labels, confidences, path) -> None:
    confidences = np.asarray(confidences, dtype=np.float64)
    if ((confidences < 0) | (confidences > 1)).any():
        raise BridgeError("model confidences outside [0, 1]")
    with open(path, "w", newline="") as fh:
        fh.write("index,predicted_label,model_confidence\n")
        for i, l, c in zip(indices, labels, confidences):
            fh.write("%d,%d,%.9g\n" % (i, l, c))


def split_indices(n: int, seed: int):
    """The shared 60/20/20 split rule (see docs/FORMATS.md)."""
    if n < 5:
        raise BridgeError(f"need at least 5 rows to split, got {n}")
    if seed < 0:
        raise BridgeError(f"seed must be non-negative, got {seed}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(0.6 * n))
    n_val = int(np.floor(0.2 * n))
    return perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :]


def split_manifest(n: int, seed: int) -> dict:
    tr, va, te = split_indices(n, seed)

    def sha(idx):
        return hashlib.sha256(idx.astype("<i8").tobytes()).hexdigest()

    return {
        "seed": int(seed),
        "n": int(n),
        "sizes": {"train": len(tr), "val": len(va), "test": len(te)},
        "indices_sha256": {"train": sha(tr), "val": sha(va), "test": sha(te)},
    }


def check_manifest(ours: dict, theirs: dict) -> None:
    """Row-count and index-hash agreement check against another tool's
    split manifest."""
    for key in ("n", "sizes", "indices_sha256"):
        if key not in theirs:
            raise BridgeError(f"foreign split manifest lacks {key!r}")
        if ours[key] != theirs[key]:
            raise BridgeError(
                f"split mismatch on {key}: ours {ours[key]} != theirs {theirs[key]}"
            )
