"""Train a mainstream model and export splits plus predictions.

The exported files are consumed by the geometric-separation toolkit
(`geosep score` / `geosep pipeline --val-preds/--test-preds`); the split is
reproduced bit-for-bit from the shared seed so prediction indices line up
with the toolkit's own split of the same dataset.
"""

from __future__ import annotations

import importlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .formats import (
    BridgeError,
    check_manifest,
    load_dataset,
    save_dataset,
    save_predictions,
    split_indices,
    split_manifest,
)

MODEL_KINDS = ("rf", "gb", "cnn", "custom")


@dataclass(frozen=True)
class BridgeConfig:
    model: str
    data: str
    seed: int
    out: str
    model_seed: int | None = None
    custom_spec: str | None = None
    verify_manifest: str | None = None

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise BridgeError(f"unknown model {self.model!r}; use rf, gb, cnn, custom")
        if self.model == "custom" and not self.custom_spec:
            raise BridgeError("--custom-spec module:factory required for custom models")

    @property
    def effective_model_seed(self) -> int:
        return self.seed if self.model_seed is None else self.model_seed


def _build_model(cfg: BridgeConfig, image_shape):
    seed = cfg.effective_model_seed
    if cfg.model == "rf":
        from sklearn.ensemble import RandomForestClassifier

        return _SklearnAdapter(
            RandomForestClassifier(n_estimators=100, random_state=seed, n_jobs=1)
        )
    if cfg.model == "gb":
        from sklearn.ensemble import GradientBoostingClassifier

        return _SklearnAdapter(GradientBoostingClassifier(random_state=seed))
    if cfg.model == "cnn":
        return _TorchCnn(seed, image_shape)
    module_name, _, attr = cfg.custom_spec.partition(":")
    if not attr:
        raise BridgeError("--custom-spec must look like package.module:factory")
    factory = getattr(importlib.import_module(module_name), attr)
    return _SklearnAdapter(factory())


class _SklearnAdapter:
    """Anything with fit/predict_proba/classes_ behaves like sklearn here."""

    def __init__(self, model):
        self.model = model

    def fit(self, X, y):
        self.model.fit(X, y)
        return self

    def predict_top(self, X):
        proba = np.asarray(self.model.predict_proba(X), dtype=np.float64)
        pick = proba.argmax(axis=1)
        classes = np.asarray(self.model.classes_, dtype=np.int64)
        return classes[pick], proba[np.arange(len(pick)), pick]


class _TorchCnn:
    """Small fixed-architecture convnet for image datasets (lazy torch)."""

    def __init__(self, seed, image_shape, epochs: int = 3):
        if image_shape is None:
            raise BridgeError("cnn model needs image shape metadata")
        self.seed = seed
        self.image_shape = tuple(int(v) for v in image_shape)
        self.epochs = epochs

    def fit(self, X, y):
        import torch
        from torch import nn

        torch.manual_seed(self.seed)
        torch.set_num_threads(1)
        h, w, c = self.image_shape
        n_classes = int(y.max()) + 1
        self.net = nn.Sequential(
            nn.Conv2d(c, 8, 3, padding=1),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(8, 16, 3, padding=1),
            nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
            nn.Linear(16, n_classes),
        )
        imgs = (
            torch.tensor(X, dtype=torch.float32)
            .reshape(-1, h, w, c)
            .permute(0, 3, 1, 2)
            .contiguous()
        )
        target = torch.tensor(y, dtype=torch.long)
        opt = torch.optim.Adam(self.net.parameters(), lr=1e-2)
        loss_fn = nn.CrossEntropyLoss()
        self.net.train()
        for _ in range(self.epochs):
            for lo in range(0, len(imgs), 64):
                opt.zero_grad()
                loss = loss_fn(self.net(imgs[lo : lo + 64]), target[lo : lo + 64])
                loss.backward()
                opt.step()
        self.net.eval()
        return self

    def predict_top(self, X):
        import torch

        h, w, c = self.image_shape
        imgs = (
            torch.tensor(X, dtype=torch.float32)
            .reshape(-1, h, w, c)
            .permute(0, 3, 1, 2)
            .contiguous()
        )
        with torch.no_grad():
            proba = torch.softmax(self.net(imgs), dim=1).numpy().astype(np.float64)
        pick = proba.argmax(axis=1)
        return pick.astype(np.int64), proba[np.arange(len(pick)), pick]


def export_predictions(cfg: BridgeConfig) -> dict:
    """Write split datasets, val/test prediction CSVs, and the split manifest.

    Returns a summary dict (val/test accuracy, file names).
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    X, y, shape = load_dataset(cfg.data)

    tr, va, te = split_indices(len(X), cfg.seed)
    manifest = split_manifest(len(X), cfg.seed)
    if cfg.verify_manifest:
        foreign = json.loads(Path(cfg.verify_manifest).read_text())
        check_manifest(manifest, foreign)

    save_dataset(X[tr], y[tr], out / "train.gsep", shape)
    save_dataset(X[va], y[va], out / "val.gsep", shape)
    save_dataset(X[te], y[te], out / "test.gsep", shape)
    (out / "splits.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")

    model = _build_model(cfg, shape).fit(X[tr], y[tr])
    summary = {
        "model": cfg.model,
        "seed": cfg.seed,
        "model_seed": cfg.effective_model_seed,
        "accuracy": {},
    }
    for name, idx in (("val", va), ("test", te)):
        labels, conf = model.predict_top(X[idx])
        # clip away float-noise excursions outside [0, 1]
        conf = np.clip(conf, 0.0, 1.0)
        save_predictions(np.arange(len(idx)), labels, conf, out / f"preds_{name}.csv")
        summary["accuracy"][name] = float((labels == y[idx]).mean())
    (out / "bridge.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return summary
