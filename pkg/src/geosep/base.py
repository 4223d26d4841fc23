"""Estimator protocol base and input validation helpers.

Estimators here follow the scikit-learn conventions (``fit`` returning
``self``, ``get_params``/``set_params`` mirroring ``__init__`` keywords,
fitted state in trailing-underscore attributes) without importing
scikit-learn, so they duck-type into sklearn pipelines and clones while
the package stays numpy-only.
"""

from __future__ import annotations

import inspect

import numpy as np

from .errors import DimensionError, EmptyInput, ParameterError


class NotFittedError(ParameterError):
    """Estimator method called before ``fit``."""


class BaseEstimator:
    """Minimal sklearn-compatible parameter protocol."""

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [
            name
            for name, p in sig.parameters.items()
            if name != "self" and p.kind not in (p.VAR_POSITIONAL, p.VAR_KEYWORD)
        ]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "BaseEstimator":
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ParameterError(
                    f"invalid parameter {name!r} for {type(self).__name__}"
                )
            setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"

    def __sklearn_tags__(self):
        # only ever invoked by scikit-learn machinery, so the lazy import
        # never runs unless sklearn is already present
        from sklearn.utils import Tags, TargetTags

        return Tags(estimator_type=None, target_tags=TargetTags(required=False))


def check_fitted(estimator, *attrs: str) -> None:
    """Raise NotFittedError unless every fitted attribute is present."""
    for attr in attrs:
        if getattr(estimator, attr, None) is None:
            raise NotFittedError(
                f"{type(estimator).__name__} is not fitted; call fit() first"
            )


def as_matrix(X, name: str = "X") -> np.ndarray:
    """Validate and return a 2-D float64 array with at least one row."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.shape[0] == 0:
        raise EmptyInput(f"{name} has no rows")
    return arr


def as_vector(x, name: str = "x") -> np.ndarray:
    """Validate and return a 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got ndim={arr.ndim}")
    return arr


def check_seed(seed) -> int:
    """Seeds feed numpy's PCG64, which requires non-negative integers."""
    seed = int(seed)
    if seed < 0:
        raise ParameterError(f"seed must be non-negative, got {seed}")
    return seed


def check_same_length(a, b, name_a: str = "a", name_b: str = "b") -> int:
    la, lb = len(a), len(b)
    if la != lb:
        raise DimensionError(f"{name_a} and {name_b} differ in length: {la} != {lb}")
    if la == 0:
        raise EmptyInput(f"{name_a} is empty")
    return la
