import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from landcover.ann import BackpropMLPClassifier, classify_pattern
from landcover.exceptions import FormatError
from landcover.kmeans import ImprovedKMeans, KmeansConfig, cluster
from landcover.raster import BandNormalizer
from landcover.synth import make_scene


@pytest.fixture(scope="module")
def scene():
    return make_scene(3, 2, 30, 30, grid=3, seed=1)


def test_params_roundtrip():
    est = ImprovedKMeans(n_clusters=4, tol=1e-3)
    assert est.get_params()["n_clusters"] == 4
    assert clone(est).get_params() == est.get_params()
    mlp = BackpropMLPClassifier(hidden=7).set_params(eta=0.5)
    assert mlp.get_params()["eta"] == 0.5 and clone(mlp).hidden == 7


def test_kmeans_estimator_matches_function(scene):
    r, truth, _ = scene
    est = ImprovedKMeans(n_clusters=3).fit(r)
    model, lm = cluster(r, KmeansConfig(k=3))
    np.testing.assert_array_equal(est.labels_, lm.labels)
    np.testing.assert_array_equal(est.predict(r), lm.labels)
    # pixel-matrix input goes through the same normalization replay
    np.testing.assert_array_equal(est.predict(r.pixels()), lm.labels.reshape(-1))
    assert est.transform(r.pixels()).shape == (900, 3)
    np.testing.assert_array_equal(est.fit_predict(r.data), lm.labels)


def test_kmeans_estimator_validation(scene):
    r, _, _ = scene
    with pytest.raises(NotFittedError):
        ImprovedKMeans().predict(r)
    with pytest.raises(FormatError):
        ImprovedKMeans().fit(r.pixels())
    est = ImprovedKMeans(n_clusters=2).fit(r)
    with pytest.raises(FormatError):
        est.predict(np.zeros((4, 5)))


def test_mlp_pipeline(scene):
    r, truth, _ = scene
    X = r.pixels()
    y = truth.labels.reshape(-1)
    idx = np.random.default_rng(0).choice(len(X), 150, replace=False)
    pipe = make_pipeline(BandNormalizer(), BackpropMLPClassifier(epochs=200))
    pipe.fit(X[idx], y[idx])
    assert pipe.score(X, y) > 0.95
    mlp = pipe[-1]
    assert len(mlp.loss_curve_) == 200
    scaled = pipe[0].transform(X[:5])
    assert [classify_pattern(mlp.model_, p)[1] for p in scaled] == mlp.predict(scaled).tolist()


def test_mlp_string_labels_and_unknown():
    X = np.array([[0.1], [0.9]] * 10)
    y = np.array(["water", "snow"] * 10)
    clf = BackpropMLPClassifier(epochs=300, unknown_label="none").fit(X, y)
    assert clf.predict([[0.1], [0.9]]).tolist() == ["water", "snow"]
    clf.set_params(tau=0.5)
    strict = BackpropMLPClassifier(epochs=1, tau=0.99, unknown_label="none").fit(X, y)
    assert set(strict.predict(X)) == {"none"}


def test_mlp_validation():
    with pytest.raises(NotFittedError):
        BackpropMLPClassifier().predict([[0.0]])
    with pytest.raises(FormatError):
        BackpropMLPClassifier().fit([[0.0], [np.nan]], [0, 1])
    with pytest.raises(FormatError):
        BackpropMLPClassifier().fit([[0.0]], [0, 1])
