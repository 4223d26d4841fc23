import numpy as np
import pytest

from geosep import Dataset


def make_blobs(n_per_class, d, n_classes, center_scale, spread, seed):
    """Gaussian class blobs with known per-class centers."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, center_scale, (n_classes, d))
    X = np.vstack(
        [rng.normal(centers[c], spread, (n_per_class, d)) for c in range(n_classes)]
    )
    y = np.repeat(np.arange(n_classes), n_per_class)
    return Dataset(X, y), centers


def two_class_instance(rng, d, n_max=200):
    """Random 2-class point cloud plus a query, for separation properties.

    The two clouds overlap enough that both safe and dangerous queries
    occur across draws.
    """
    n0 = int(rng.integers(3, n_max // 2))
    n1 = int(rng.integers(3, n_max // 2))
    c0 = rng.normal(0.0, 1.0, d)
    c1 = c0 + rng.normal(0.0, 1.5, d)
    X = np.vstack([rng.normal(c0, 1.0, (n0, d)), rng.normal(c1, 1.0, (n1, d))])
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    query = rng.normal((c0 + c1) / 2.0, 1.2, d)
    predicted = int(rng.integers(2))
    return Dataset(X, y), query, predicted


@pytest.fixture
def image_dataset():
    """Small 4x4x1 image dataset with shape metadata."""
    rng = np.random.default_rng(11)
    X = rng.random((10, 16))
    y = rng.integers(0, 3, 10)
    return Dataset(X, y, image_shape=(4, 4, 1))


@pytest.fixture
def rgb_dataset():
    rng = np.random.default_rng(12)
    X = rng.random((6, 4 * 4 * 3))
    y = rng.integers(0, 2, 6)
    return Dataset(X, y, image_shape=(4, 4, 3))
