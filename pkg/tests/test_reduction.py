import numpy as np
import pytest

from geosep import (
    Dataset,
    ReducedSpace,
    Reducer,
    ReductionConfig,
    fit_reduction,
    grayscale,
    kmeans_reduce,
    pca_fit,
    pool,
    resize_bilinear,
    sample_pixels,
    sample_set,
)
from geosep.errors import (
    ParameterError,
    ReductionTooAggressive,
    ShapeError,
    TooFewRows,
)


def _img_ds(n=12, h=8, w=8, c=1, n_classes=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, h * w * c))
    y = rng.integers(0, n_classes, n)
    y[:n_classes] = np.arange(n_classes)  # every class present
    return Dataset(X, y, image_shape=(h, w, c))


# ---------------------------------------------------------------------------
# grayscale


def test_grayscale_weights():
    ones = Dataset(np.ones((1, 12)), np.array([0]), image_shape=(2, 2, 3))
    g = grayscale(ones)
    assert np.allclose(g.features, 1.0, atol=1e-12)
    assert g.image_shape == (2, 2, 1) and g.d == 4

    red = np.zeros((1, 12))
    red[0, 0::3] = 1.0  # channel-interleaved rows: R at every third entry
    g = grayscale(Dataset(red, np.array([0]), image_shape=(2, 2, 3)))
    assert np.allclose(g.features, 0.299, atol=1e-12)


def test_grayscale_requires_three_channels(image_dataset):
    with pytest.raises(ShapeError):
        grayscale(image_dataset)
    with pytest.raises(ShapeError):
        grayscale(Dataset(np.ones((2, 4)), np.array([0, 1])))


# ---------------------------------------------------------------------------
# pooling


def _tiny_image(values):
    arr = np.asarray(values, dtype=np.float64).reshape(1, -1)
    side = int(np.sqrt(arr.shape[1]))
    return Dataset(arr, np.array([0]), image_shape=(side, side, 1))


def test_pool_avg_and_max():
    ds = _tiny_image([1.0, 2.0, 3.0, 4.0])
    assert pool(ds, 2, "avg").features.tolist() == [[2.5]]
    assert pool(ds, 2, "max").features.tolist() == [[4.0]]


def test_pool_constant_image():
    ds = Dataset(np.full((3, 16), 0.7), np.array([0, 1, 0]), image_shape=(4, 4, 1))
    for fn in ("avg", "max"):
        out = pool(ds, 2, fn)
        assert np.allclose(out.features, 0.7, atol=1e-15)
        assert out.image_shape == (2, 2, 1)


def test_pool_divisibility_error():
    ds = Dataset(np.ones((1, 9)), np.array([0]), image_shape=(3, 3, 1))
    with pytest.raises(ShapeError, match="divisible"):
        pool(ds, 2)


def test_pool_multichannel():
    rng = np.random.default_rng(1)
    ds = Dataset(rng.random((2, 4 * 4 * 3)), np.array([0, 1]), image_shape=(4, 4, 3))
    out = pool(ds, 2, "avg")
    assert out.image_shape == (2, 2, 3) and out.d == 12
    img = ds.features[0].reshape(4, 4, 3)
    assert out.features[0][0] == pytest.approx(img[:2, :2, 0].mean(), abs=1e-12)


def test_avgpool_distance_contraction():
    rng = np.random.default_rng(2)
    ds = Dataset(rng.random((20, 64)), rng.integers(0, 2, 20), image_shape=(8, 8, 1))
    for t in (2, 4):
        out = pool(ds, t, "avg")
        for _ in range(30):
            i, j = rng.integers(0, 20, 2)
            orig = np.linalg.norm(ds.features[i] - ds.features[j])
            red = np.linalg.norm(out.features[i] - out.features[j])
            assert red <= orig * t + 1e-12


# ---------------------------------------------------------------------------
# pca


def test_pca_collinear_preserves_distances():
    line = np.outer([0.0, 1.0, 2.0], np.ones(4))
    ds = Dataset(line, np.array([0, 1, 0]))
    space = pca_fit(ds, t=2)  # k = floor(4/4) = 1
    assert space.basis.shape == (1, 4)
    proj = space.map_rows(ds.features)
    for i in range(3):
        for j in range(3):
            assert np.linalg.norm(proj[i] - proj[j]) == pytest.approx(
                np.linalg.norm(line[i] - line[j]), abs=1e-9
            )


def test_pca_constant_column_zero_loading_variance():
    rng = np.random.default_rng(3)
    X = rng.random((30, 8))
    X[:, 5] = 0.42
    ds = Dataset(X, rng.integers(0, 2, 30))
    space = pca_fit(ds, t=2)  # k = 2
    proj = space.map_rows(X)
    # the constant feature contributes nothing: perturbing it changes nothing
    X2 = X.copy()
    X2[:, 5] = 0.42
    assert np.allclose(space.map_rows(X2), proj, atol=1e-12)
    assert np.allclose(space.basis[:, 5] * X[:, 5].std(), 0.0, atol=1e-9)


def test_pca_full_rank_preserves_distances():
    rng = np.random.default_rng(4)
    X = rng.normal(0, 2, (40, 6))
    ds = Dataset(X, rng.integers(0, 3, 40))
    space = pca_fit(ds, t=1)  # k = d: orthonormal change of basis
    proj = space.map_rows(X)
    for _ in range(50):
        i, j = rng.integers(0, 40, 2)
        assert np.linalg.norm(proj[i] - proj[j]) == pytest.approx(
            np.linalg.norm(X[i] - X[j]), abs=1e-6
        )


def test_pca_sign_convention_and_errors():
    rng = np.random.default_rng(5)
    ds = Dataset(rng.random((10, 8)), rng.integers(0, 2, 10))
    space = pca_fit(ds, t=2)
    for row in space.basis:
        assert row[np.argmax(np.abs(row))] > 0
    with pytest.raises(ReductionTooAggressive):
        pca_fit(ds, t=3)  # floor(8/9) = 0
    with pytest.raises(TooFewRows):
        pca_fit(Dataset(np.ones((1, 8)), np.array([0])), t=2)


# ---------------------------------------------------------------------------
# bilinear resize


def test_rbi_constant_image():
    ds = Dataset(np.full((2, 64), 0.3), np.array([0, 1]), image_shape=(8, 8, 1))
    out = resize_bilinear(ds, 2)
    assert out.image_shape == (4, 4, 1)
    assert np.allclose(out.features, 0.3, atol=1e-12)


def test_rbi_2x2_derived():
    ds = _tiny_image([0.0, 1.0, 0.0, 1.0])  # rows [[0,1],[0,1]]
    out = resize_bilinear(ds, 2)
    assert out.features.tolist() == [[0.5]]


def test_rbi_identity_t1(image_dataset):
    out = resize_bilinear(image_dataset, 1)
    assert np.array_equal(out.features, image_dataset.features)


def test_rbi_requires_shape():
    with pytest.raises(ShapeError):
        resize_bilinear(Dataset(np.ones((1, 4)), np.array([0])), 2)


def test_rbi_matches_opencv():
    cv2 = pytest.importorskip("cv2")
    rng = np.random.default_rng(20)
    for h, w, c, t in [(8, 8, 1, 2), (12, 8, 3, 2), (16, 16, 1, 4)]:
        ds = Dataset(
            rng.random((3, h * w * c)), np.zeros(3, dtype=int), image_shape=(h, w, c)
        )
        out = resize_bilinear(ds, t)
        for i in range(3):
            ref = cv2.resize(
                ds.features[i].reshape(h, w, c),
                (w // t, h // t),
                interpolation=cv2.INTER_LINEAR,
            ).reshape(out.d)
            assert np.abs(out.features[i] - ref).max() < 1e-12


# ---------------------------------------------------------------------------
# random pixels


def test_randpix_count_and_determinism():
    ds = _img_ds(n=5, h=2, w=4, c=1)  # d = 8
    s1 = sample_pixels(ds, t=2, seed=7)
    s2 = sample_pixels(ds, t=2, seed=7)
    s3 = sample_pixels(ds, t=2, seed=8)
    assert len(s1.pixel_indices) == 2
    assert len(np.unique(s1.pixel_indices)) == 2
    assert np.array_equal(s1.pixel_indices, s2.pixel_indices)
    assert not np.array_equal(s1.pixel_indices, s3.pixel_indices)


def test_randpix_too_aggressive():
    ds = Dataset(np.ones((3, 8)), np.array([0, 1, 0]))
    with pytest.raises(ReductionTooAggressive):
        sample_pixels(ds, t=3, seed=0)


# ---------------------------------------------------------------------------
# kmeans


def test_kmeans_no_reduction_returns_points():
    rng = np.random.default_rng(6)
    X = rng.random((6, 3))
    ds = Dataset(X, np.array([0, 0, 0, 1, 1, 1]))
    space = kmeans_reduce(ds, t=1, seed=0)
    red = space.reduced_set
    assert red.n == 6
    for c in (0, 1):
        got = red.features[red.labels == c]
        want = X[ds.labels == c]
        assert np.allclose(np.sort(got, axis=0), np.sort(want, axis=0), atol=1e-12)


def test_kmeans_single_cluster_is_class_mean():
    rng = np.random.default_rng(7)
    X = rng.random((8, 4))
    ds = Dataset(X, np.array([0] * 4 + [1] * 4))
    space = kmeans_reduce(ds, t=2, seed=0)  # k_c = 1 per class
    red = space.reduced_set
    assert red.n == 2
    for c in (0, 1):
        assert np.allclose(
            red.features[red.labels == c][0], X[ds.labels == c].mean(0), atol=1e-12
        )


def test_kmeans_two_blobs_recovers_means():
    rng = np.random.default_rng(8)
    blob_a = rng.normal((0, 0), 0.01, (16, 2))
    blob_b = rng.normal((10, 10), 0.01, (16, 2))
    ds = Dataset(np.vstack([blob_a, blob_b]), np.zeros(32, dtype=int))
    space = kmeans_reduce(ds, t=4, seed=3)  # k_c = 32 // 16 = 2
    red = space.reduced_set
    assert red.n == 2
    means = sorted(red.features.tolist())
    assert np.allclose(means[0], blob_a.mean(0), atol=1e-6)
    assert np.allclose(means[1], blob_b.mean(0), atol=1e-6)


def test_kmeans_labels_preserved_and_every_class_kept():
    rng = np.random.default_rng(9)
    ds = Dataset(
        rng.random((50, 4)),
        np.concatenate([np.zeros(30, dtype=int), np.ones(17, dtype=int), np.full(3, 2)]),
    )
    space = kmeans_reduce(ds, t=3, seed=1)
    red = space.reduced_set
    assert set(np.unique(red.labels)) == {0, 1, 2}
    assert set(np.unique(red.labels)) <= set(np.unique(ds.labels))
    # per-class rule: max(1, floor(n_c / t^2))
    assert (red.labels == 0).sum() == max(1, 30 // 9)
    assert (red.labels == 1).sum() == max(1, 17 // 9)
    assert (red.labels == 2).sum() == 1


def test_kmeans_deterministic():
    ds = _img_ds(n=40, n_classes=4, seed=10)
    a = kmeans_reduce(ds, t=2, seed=5).reduced_set
    b = kmeans_reduce(ds, t=2, seed=5).reduced_set
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)


# ---------------------------------------------------------------------------
# random set


def test_randset_count_and_determinism():
    ds = _img_ds(n=16, seed=11)
    s1 = sample_set(ds, t=2, seed=4)
    s2 = sample_set(ds, t=2, seed=4)
    assert s1.reduced_set.n == 4
    assert np.array_equal(s1.reduced_set.features, s2.reduced_set.features)
    with pytest.raises(ReductionTooAggressive):
        sample_set(Dataset(np.ones((3, 2)), np.array([0, 1, 0])), t=2, seed=0)


def test_randset_labels_carried():
    ds = _img_ds(n=40, seed=12)
    red = sample_set(ds, t=2, seed=9).reduced_set
    for row, label in zip(red.features, red.labels):
        idx = np.flatnonzero((ds.features == row).all(axis=1))
        assert len(idx) >= 1 and label in ds.labels[idx]


# ---------------------------------------------------------------------------
# contract: stored scalars shrink by t^2


@pytest.mark.parametrize("t", [2, 4])
def test_scalar_count_contract_pixel_methods(t):
    ds = _img_ds(n=10, h=8, w=8)
    d = ds.d
    assert pool(ds, t, "avg").d == d // (t * t)
    assert pool(ds, t, "max").d == d // (t * t)
    assert resize_bilinear(ds, t).d == (8 // t) * (8 // t)
    assert pca_fit(ds, t).basis.shape[0] == d // (t * t)
    assert len(sample_pixels(ds, t, 0).pixel_indices) == d // (t * t)


@pytest.mark.parametrize("t", [2, 4])
def test_scalar_count_contract_set_methods(t):
    n_per = 48  # divisible by 4 and 16 so the per-class and global rules agree
    rng = np.random.default_rng(13)
    ds = Dataset(
        rng.random((4 * n_per, 6)), np.repeat(np.arange(4), n_per)
    )
    assert sample_set(ds, t, 0).reduced_set.n == ds.n // (t * t)
    assert kmeans_reduce(ds, t, 0).reduced_set.n == ds.n // (t * t)


# ---------------------------------------------------------------------------
# ReducedSpace behaviour


@pytest.mark.parametrize("method", ["pool", "maxpool", "pca", "rbi", "randpix"])
def test_pixel_reduction_commutes_with_query_mapping(method):
    ds = _img_ds(n=14, h=8, w=8, seed=14)
    space = fit_reduction(ds, ReductionConfig(method, 2, seed=3))
    reduced_train = space.training_set(ds)
    mapped_rows = space.map_rows(ds.features)
    assert np.array_equal(reduced_train.features, mapped_rows)
    # idempotence: mapping the same row twice gives the identical result
    assert np.array_equal(space.map_rows(ds.features[:3]), mapped_rows[:3])


@pytest.mark.parametrize("method", ["kmeans", "randset"])
def test_set_reduction_leaves_queries_untouched(method):
    ds = _img_ds(n=20, seed=15)
    space = fit_reduction(ds, ReductionConfig(method, 2, seed=3))
    assert np.array_equal(space.apply(ds).features, ds.features)
    assert space.training_set(ds).n < ds.n


@pytest.mark.parametrize(
    "method", ["pool", "maxpool", "pca", "rbi", "randpix", "kmeans", "randset"]
)
def test_space_file_roundtrip_and_reproducible(method, tmp_path):
    ds = _img_ds(n=20, h=8, w=8, seed=16)
    cfg = ReductionConfig(method, 2, seed=11)
    space = fit_reduction(ds, cfg)
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    p1 = tmp_path / "a" / "space.json"
    p2 = tmp_path / "b" / "space.json"
    space.save(p1)
    fit_reduction(ds, cfg).save(p2)
    assert p1.read_bytes() == p2.read_bytes()  # seeded build reproducible
    for sidecar in p1.parent.iterdir():
        if sidecar.name != "space.json":
            assert sidecar.read_bytes() == (p2.parent / sidecar.name).read_bytes()
    back = ReducedSpace.load(p1)
    got = back.map_rows(ds.features[:4])
    want = space.map_rows(ds.features[:4])
    if method == "pca":
        assert np.allclose(got, want, atol=1e-5)  # f32 appendix precision
    else:
        assert np.array_equal(got, want)
    if method in ("kmeans", "randset"):
        assert np.allclose(
            back.reduced_set.features,
            space.reduced_set.features.astype(np.float32),
            atol=0,
        )


def test_reduction_config_validation():
    with pytest.raises(ParameterError):
        ReductionConfig("pool", 1)
    with pytest.raises(ParameterError):
        ReductionConfig("wavelet", 2)
    with pytest.raises(ParameterError):
        ReductionConfig("randset", 2, seed=-4)


def test_reducer_estimator(image_dataset):
    r = Reducer(method="pool", t=2, seed=0)
    assert r.get_params() == {"method": "pool", "t": 2, "seed": 0}
    out = r.fit(image_dataset).transform(image_dataset)
    assert out.d == image_dataset.d // 4
    assert np.array_equal(r.fit_transform(image_dataset).features, out.features)
