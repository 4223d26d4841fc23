import numpy as np
import pytest

from geosep import Dataset, KNearest, NearestCentroid, fit_model
from geosep.errors import DimensionError, ParameterError


def test_centroid_one_row_per_class():
    X = np.array([[0.0, 0.0], [4.0, 4.0]])
    m = NearestCentroid().fit(X, [0, 1])
    assert np.array_equal(m.centroids_, X)


def test_centroid_is_class_mean():
    m = NearestCentroid().fit(np.array([[0.0, 0.0], [2.0, 0.0], [9.0, 9.0]]), [0, 0, 1])
    assert m.centroids_[0].tolist() == [1.0, 0.0]


def test_centroid_invariant_under_row_permutation():
    rng = np.random.default_rng(0)
    X = rng.random((20, 3))
    y = rng.integers(0, 3, 20)
    a = NearestCentroid().fit(X, y)
    perm = rng.permutation(20)
    b = NearestCentroid().fit(X[perm], y[perm])
    assert np.allclose(a.centroids_, b.centroids_, atol=1e-12)


def test_centroid_prediction_and_tie():
    m = NearestCentroid().fit(np.array([[0.0], [2.0]]), [0, 1])
    assert m.predict(np.array([[0.1]]))[0] == 0
    # equidistant: lower class id wins, confidence exactly 1/2
    preds = m.predictions(np.array([[1.0]]))
    assert preds.labels[0] == 0
    assert preds.confidences[0] == pytest.approx(0.5, abs=1e-12)


def test_centroid_softmax_hand_value():
    # distances 0 and tau*ln4 give confidence 1/(1 + 1/4) = 0.8
    tau = 0.7
    m = NearestCentroid(tau=tau).fit(np.array([[0.0], [tau * np.log(4.0)]]), [0, 1])
    preds = m.predictions(np.array([[0.0]]))
    assert preds.confidences[0] == pytest.approx(0.8, abs=1e-12)


def test_centroid_probabilities_sum_to_one():
    rng = np.random.default_rng(1)
    m = NearestCentroid(tau=0.3).fit(rng.random((30, 4)), rng.integers(0, 5, 30))
    proba = m.predict_proba(rng.random((10, 4)))
    assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-9)


def test_centroid_scale_invariant_argmin():
    rng = np.random.default_rng(2)
    X = rng.random((24, 3))
    y = rng.integers(0, 3, 24)
    Q = rng.random((8, 3))
    a = NearestCentroid().fit(X, y).predict(Q)
    b = NearestCentroid().fit(X * 7.5, y).predict(Q * 7.5)
    assert np.array_equal(a, b)


def test_centroid_dimension_error():
    m = NearestCentroid().fit(np.zeros((4, 3)), [0, 0, 1, 1])
    with pytest.raises(DimensionError):
        m.predict(np.zeros((2, 5)))


def test_knn_k1_nearest():
    X = np.array([[0.0], [5.0], [6.0]])
    m = KNearest(k=1).fit(X, [2, 0, 1])
    preds = m.predictions(np.array([[0.2]]))
    assert preds.labels[0] == 2 and preds.confidences[0] == 1.0


def test_knn_majority_two_thirds():
    X = np.array([[0.0], [1.0], [2.0], [50.0]])
    m = KNearest(k=3).fit(X, [0, 0, 1, 1])
    preds = m.predictions(np.array([[0.5]]))
    assert preds.labels[0] == 0
    assert preds.confidences[0] == pytest.approx(2 / 3)


def test_knn_k_equals_n_global_majority():
    X = np.arange(5.0).reshape(5, 1)
    m = KNearest(k=5).fit(X, [1, 1, 1, 0, 0])
    assert m.predict(np.array([[100.0]]))[0] == 1


def test_knn_even_k_rejected():
    with pytest.raises(ParameterError):
        KNearest(k=2).fit(np.zeros((4, 1)), [0, 1, 0, 1])


def test_knn_train_row_self_label():
    rng = np.random.default_rng(3)
    X = rng.random((15, 4))
    y = rng.integers(0, 4, 15)
    m = KNearest(k=1).fit(X, y)
    assert np.array_equal(m.predict(X), y)


def test_knn_vote_tie_lowest_class():
    X = np.array([[0.0], [1.0], [2.0]])
    m = KNearest(k=3).fit(X, [2, 0, 1])  # one vote each
    assert m.predict(np.array([[1.0]]))[0] == 0


def test_fit_model_helper():
    ds = Dataset(np.random.default_rng(4).random((10, 2)), np.arange(10) % 2)
    assert isinstance(fit_model("centroid", ds), NearestCentroid)
    assert isinstance(fit_model("knn", ds, k=3), KNearest)
    with pytest.raises(ParameterError):
        fit_model("forest", ds)
