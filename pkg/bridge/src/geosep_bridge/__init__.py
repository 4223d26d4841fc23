"""Prediction exporter bridging mainstream ML stacks to the geosep toolkit."""

from .export import BridgeConfig, export_predictions
from .formats import BridgeError, load_dataset, save_dataset, split_indices

__all__ = [
    "BridgeConfig",
    "BridgeError",
    "export_predictions",
    "load_dataset",
    "save_dataset",
    "split_indices",
]
