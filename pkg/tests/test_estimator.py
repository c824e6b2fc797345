import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from simam2 import SimAM2Classifier, SimAMTransformer
from simam2.energy import simam_unimodal
from simam2.harness import SyntheticSpec, gen_synthetic


@pytest.fixture(scope="module")
def data():
    d = gen_synthetic(SyntheticSpec(train_size=120, val_size=8, test_size=60, dim_a=16))
    stack = lambda s: np.hstack([s.x_v, s.x_a])
    return stack(d.train), d.train.y, stack(d.test), d.test.y, d.train.x_v.shape[1]


def test_get_params_and_clone():
    clf = SimAM2Classifier(n_features_v=3, epochs=4, fusion="summation-fixed", scheme="none")
    params = clf.get_params()
    assert params["n_features_v"] == 3 and params["epochs"] == 4
    assert clone(clf).get_params() == params


def test_fit_predict_score(data):
    x, y, xt, yt, nv = data
    labels = np.array(["c%d" % v for v in y])
    clf = SimAM2Classifier(n_features_v=nv, epochs=5).fit(x, labels)
    proba = clf.predict_proba(xt)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert set(clf.predict(xt)) <= set(clf.classes_)
    assert 0.0 <= clf.score(xt, np.array(["c%d" % v for v in yt])) <= 1.0
    again = SimAM2Classifier(n_features_v=nv, epochs=5).fit(x, labels)
    np.testing.assert_array_equal(proba, again.predict_proba(xt))


def test_input_validation(data):
    x, y, xt, _, nv = data
    with pytest.raises(NotFittedError):
        SimAM2Classifier(n_features_v=nv).predict(xt)
    with pytest.raises(ValueError):
        SimAM2Classifier(n_features_v=x.shape[1]).fit(x, y)
    with pytest.raises(ValueError):
        SimAM2Classifier(n_features_v=nv).fit(x, np.zeros(len(y)))
    clf = SimAM2Classifier(n_features_v=nv, epochs=1).fit(x, y)
    with pytest.raises(ValueError):
        clf.predict(xt[:, :-1])
    with pytest.raises(ValueError):
        SimAM2Classifier(n_features_v=nv, fusion="film", scheme="decoupled").fit(x, y)


def test_transformer_matches_functional_form():
    x = np.random.default_rng(0).normal(size=(5, 3, 4))
    t = SimAMTransformer(lam=1e-4).fit(x)
    np.testing.assert_allclose(t.transform(x), simam_unimodal(x, 1e-4).data)
    flat = np.random.default_rng(1).normal(size=(5, 6))
    out = SimAMTransformer().fit_transform(flat)
    assert out.shape == flat.shape and np.all(np.abs(out) <= np.abs(flat))
    with pytest.raises(ValueError):
        t.transform(x[:, :2])
