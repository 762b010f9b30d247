import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from wdce.estimator import WDCEClassifier
from wdce.model import ABLATIONS, TrainConfig

TINY = dict(n_stgc=1, n_ssa=1, channels=(8,), heads=2, tcn_kernel=3, epochs=2, batch_size=8)


def _data(n=16, seed=0):
    rng = np.random.default_rng(seed)
    y = np.array(["walk", "wave"] * (n // 2))
    X = rng.normal(size=(n, 3, 8, 5)) * 0.1 + (y == "wave")[:, None, None, None]
    return X, y


def test_params_round_trip_and_clone():
    est = WDCEClassifier(lr=0.2, **TINY)
    assert est.get_params()["lr"] == 0.2
    c = clone(est)
    assert c.get_params() == est.get_params()
    assert est.train_config() == TrainConfig(**{**{k: v for k, v in est.get_params().items() if k in TrainConfig.field_names()}, "seed": 0})


def test_fit_predict_proba():
    X, y = _data()
    est = WDCEClassifier(**TINY).fit(X, y)
    assert list(est.classes_) == ["walk", "wave"]
    proba = est.predict_proba(X)
    assert proba.shape == (16, 2)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, rtol=1e-12)
    assert set(est.predict(X)) <= {"walk", "wave"}
    assert np.array_equal(est.predict(X), est.classes_[proba.argmax(axis=1)])
    assert len(est.history_) == 4
    assert est.transform(X).shape == (16, 8)
    feats = est.features(X[:3])
    assert feats["att"].shape == (3, 8, 5)
    assert feats["salient"].shape == feats["subtle"].shape == (3, 8)


def test_same_seed_same_model():
    X, y = _data()
    a = WDCEClassifier(**TINY).fit(X, y).decision_function(X)
    b = WDCEClassifier(**TINY).fit(X, y).decision_function(X)
    assert np.array_equal(a, b)


def test_ablation_switches_pass_through():
    X, y = _data()
    est = WDCEClassifier(**TINY, **ABLATIONS["baseline"]).fit(X, y, max_steps=1)
    assert est.model_.bank is None and "head_salient.w" not in est.model_.params


def test_not_fitted_and_bad_input():
    X, y = _data()
    with pytest.raises(NotFittedError):
        WDCEClassifier(**TINY).predict(X)
    with pytest.raises(ValueError, match="even"):
        WDCEClassifier(**TINY).fit(X[:, :, :7], y)
    with pytest.raises(ValueError):
        WDCEClassifier(**TINY).fit(X[:, 0], y)
    est = WDCEClassifier(**TINY).fit(X, y, max_steps=1)
    with pytest.raises(ValueError):
        est.predict(X[:, :, :6])
