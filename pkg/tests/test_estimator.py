"""Estimator facade tests: sklearn API contract plus a small end-to-end fit
showing the clustering actually separates an easy two-blob problem.
"""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gedi.estimator import GediClustering
from gedi.evaluate import nmi


def _blobs(n=120, seed=0):
    rng = np.random.default_rng(seed)
    half = n // 2
    x = np.vstack([rng.normal((-2.0, 0.0), 0.3, (half, 2)),
                   rng.normal((2.0, 0.0), 0.3, (n - half, 2))])
    y = np.repeat([0, 1], (half, n - half))
    perm = rng.permutation(n)
    return x[perm], y[perm]


def _fast_estimator(**kw):
    args = dict(encoder_hidden=(32, 32), embed_dim=2, head_hidden=(4,),
                n_iterations=1000, batch_size=120, buffer_size=256,
                random_state=0)
    args.update(kw)
    return GediClustering(**args)


@pytest.fixture(scope="module")
def blob_fit():
    x, y = _blobs()
    return x, y, _fast_estimator().fit(x)


def test_get_params_round_trips_through_clone():
    est = _fast_estimator(w_prior=7.0)
    cloned = clone(est)
    assert cloned.get_params() == est.get_params()
    assert est.get_params()["w_prior"] == 7.0
    est.set_params(w_prior=9.0)
    assert est.get_params()["w_prior"] == 9.0


def test_unfitted_estimator_refuses_to_predict():
    with pytest.raises(NotFittedError):
        _fast_estimator().predict(np.zeros((3, 2)))


def test_fit_requires_two_samples():
    with pytest.raises(ValueError, match="at least 2"):
        _fast_estimator().fit(np.zeros((1, 2)))


def test_fit_predict_contract(blob_fit):
    x, _, est = blob_fit
    assert est.n_features_in_ == 2
    assert est.labels_.shape == (len(x),)
    assert set(np.unique(est.labels_)) <= {0, 1}

    pred = est.predict(x)
    assert np.array_equal(pred, est.labels_)
    proba = est.predict_proba(x)
    assert proba.shape == (len(x), 2)
    assert np.max(np.abs(proba.sum(axis=1) - 1.0)) < 1e-9
    emb = est.transform(x)
    assert emb.shape == (len(x), 2)
    scores = est.score_samples(x)
    assert scores.shape == (len(x),)
    assert est.score(x) == pytest.approx(float(scores.mean()))


def test_fit_separates_easy_blobs(blob_fit):
    x, y, est = blob_fit
    assert nmi(est.labels_, y) > 0.9


def test_feature_count_mismatch_is_an_error(blob_fit):
    _, _, est = blob_fit
    with pytest.raises(ValueError, match="features"):
        est.predict(np.zeros((4, 3)))


def test_same_random_state_reproduces_the_fit():
    x, _ = _blobs()
    a = _fast_estimator(n_iterations=120).fit(x)
    b = _fast_estimator(n_iterations=120).fit(x)
    assert np.array_equal(a.labels_, b.labels_)
    assert np.array_equal(a.predict_proba(x), b.predict_proba(x))
