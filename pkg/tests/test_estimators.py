import numpy as np
import pytest
from sklearn.base import clone
from sklearn.model_selection import cross_val_score

from panfl.data import make_synthetic_split
from panfl.estimators import FederatedPanClassifier, PanMlpClassifier


@pytest.fixture(scope="module")
def task():
    train, test = make_synthetic_split(1200, 400, 12, 6, 5.0, seed=13)
    return train, test


class TestPanMlpClassifier:
    def test_fit_predict_separable(self, task):
        train, test = task
        clf = PanMlpClassifier(hidden_sizes=(24,), epochs=15, seed=0)
        clf.fit(train.features, train.labels)
        assert clf.score(test.features, test.labels) > 0.95

    def test_predict_proba_normalized(self, task):
        train, test = task
        clf = PanMlpClassifier(hidden_sizes=(16,), epochs=3, seed=0)
        clf.fit(train.features, train.labels)
        proba = clf.predict_proba(test.features)
        assert proba.shape == (test.n_samples, 6)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)

    def test_seed_determinism(self, task):
        train, test = task
        a = PanMlpClassifier(epochs=3, seed=7).fit(train.features, train.labels)
        b = PanMlpClassifier(epochs=3, seed=7).fit(train.features, train.labels)
        np.testing.assert_array_equal(a.predict(test.features),
                                      b.predict(test.features))

    def test_pan_modes_train(self, task):
        train, test = task
        for mode, amp in (("additive", 0.05), ("multiplicative", 0.1)):
            clf = PanMlpClassifier(pan_mode=mode, amplitude=amp, epochs=10, seed=1)
            clf.fit(train.features, train.labels)
            assert clf.score(test.features, test.labels) > 0.9

    def test_clone_and_get_params(self):
        clf = PanMlpClassifier(pan_mode="multiplicative", amplitude=0.1, seed=3)
        cloned = clone(clf)
        assert cloned.get_params() == clf.get_params()

    def test_cross_val_smoke(self, task):
        train, _ = task
        clf = PanMlpClassifier(hidden_sizes=(16,), epochs=3, seed=0)
        scores = cross_val_score(clf, train.features, train.labels, cv=3)
        assert scores.shape == (3,)

    def test_noninteger_labels(self, task):
        train, test = task
        labels = np.array(["cls%d" % v for v in train.labels])
        clf = PanMlpClassifier(hidden_sizes=(16,), epochs=5, seed=0)
        clf.fit(train.features, labels)
        preds = clf.predict(test.features[:5])
        assert all(p.startswith("cls") for p in preds)


class TestFederatedPanClassifier:
    def test_fit_predict(self, task):
        train, test = task
        clf = FederatedPanClassifier(n_clients=5, rounds=8, local_epochs=2,
                                     hidden_sizes=(16,), seed=0)
        clf.fit(train.features, train.labels, X_val=test.features,
                y_val=test.labels)
        assert clf.score(test.features, test.labels) > 0.9
        assert len(clf.history_.records) == 8
        assert len(clf.clients_) == 5

    def test_algorithms_run(self, task):
        train, test = task
        for algorithm in ("fedavg", "fedprox", "fedopt"):
            clf = FederatedPanClassifier(n_clients=3, rounds=2, local_epochs=1,
                                         hidden_sizes=(8,), algorithm=algorithm,
                                         server_lr=0.5, seed=0)
            clf.fit(train.features, train.labels)
            assert clf.predict(test.features).shape == (test.n_samples,)

    def test_seed_determinism(self, task):
        train, test = task
        kwargs = dict(n_clients=4, rounds=3, local_epochs=1, hidden_sizes=(8,),
                      alpha=0.5, seed=9)
        a = FederatedPanClassifier(**kwargs).fit(train.features, train.labels)
        b = FederatedPanClassifier(**kwargs).fit(train.features, train.labels)
        for pa, pb in zip(a.model_.parameters(), b.model_.parameters()):
            np.testing.assert_array_equal(pa, pb)

    def test_clone(self):
        clf = FederatedPanClassifier(alpha=0.1, algorithm="fedprox", prox_mu=1e-3)
        assert clone(clf).get_params() == clf.get_params()
