"""Scikit-learn style estimators wrapping the training loops.

``PanMlpClassifier`` trains one network centrally; ``FederatedPanClassifier``
partitions the training set across simulated clients and runs the federated
loop. Both follow the sklearn contract (``get_params``/``set_params``,
``fit``/``predict``/``predict_proba``, trailing-underscore fitted attributes)
so they compose with pipelines, grid search and cross-validation.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import Dataset
from .federated import FederationConfig, run_experiment, train_centralized
from .linalg import derive_rng
from .network import PanConfig, init_mlp, predict_logits


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


class _PanClassifierBase(ClassifierMixin, BaseEstimator):
    def _validate_fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        self.n_features_in_ = X.shape[1]
        return X, encoded.astype(np.int64)

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, but this estimator "
                             f"was fitted with {self.n_features_in_}")
        return _softmax(predict_logits(self.model_, X))

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]


class PanMlpClassifier(_PanClassifierBase):
    """Centrally trained MLP classifier with optional position encodings.

    Parameters mirror the network and optimizer knobs: ``pan_mode`` is one of
    "off", "additive", "multiplicative"; ``amplitude`` and ``period`` shape
    the per-neuron sinusoid.
    """

    def __init__(self, hidden_sizes=(32, 32), pan_mode="off", amplitude=0.0,
                 period=1.0, lr=0.05, momentum=0.9, epochs=10, batch_size=64,
                 warmup_steps=0, seed=0):
        self.hidden_sizes = hidden_sizes
        self.pan_mode = pan_mode
        self.amplitude = amplitude
        self.period = period
        self.lr = lr
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.warmup_steps = warmup_steps
        self.seed = seed

    def fit(self, X, y):
        X, encoded = self._validate_fit(X, y)
        pan = PanConfig(mode=self.pan_mode, amplitude=self.amplitude,
                        period=self.period)
        train = Dataset(X, encoded, n_classes=len(self.classes_))
        sizes = (train.n_features, *self.hidden_sizes, train.n_classes)
        self.model_ = init_mlp(sizes, pan, derive_rng(self.seed, 0))
        self.history_ = train_centralized(
            self.model_, train, None, epochs=self.epochs, lr=self.lr,
            momentum=self.momentum, batch_size=self.batch_size,
            warmup_steps=self.warmup_steps, rng=derive_rng(self.seed, 1))
        self.loss_curve_ = [rec.loss for rec in self.history_]
        return self


class FederatedPanClassifier(_PanClassifierBase):
    """Federated MLP classifier: Dirichlet-partitions the training data across
    simulated clients and runs coordinate-averaging rounds.

    ``algorithm`` selects the aggregation rule ("fedavg", "fedprox",
    "fedopt"); ``n_shuffles``/``shuffle_p`` enable mid-training shuffle
    injection for misalignment studies.
    """

    def __init__(self, hidden_sizes=(32, 32), pan_mode="off", amplitude=0.0,
                 period=1.0, n_clients=10, participation=1.0, local_epochs=5,
                 rounds=20, batch_size=64, alpha=10.0, lr=0.05, momentum=0.9,
                 algorithm="fedavg", prox_mu=1e-3, server_lr=1.0,
                 server_momentum=0.9, n_shuffles=0.0, shuffle_p=0.1,
                 warmup_steps=0, sample_weighted=False, seed=0):
        self.hidden_sizes = hidden_sizes
        self.pan_mode = pan_mode
        self.amplitude = amplitude
        self.period = period
        self.n_clients = n_clients
        self.participation = participation
        self.local_epochs = local_epochs
        self.rounds = rounds
        self.batch_size = batch_size
        self.alpha = alpha
        self.lr = lr
        self.momentum = momentum
        self.algorithm = algorithm
        self.prox_mu = prox_mu
        self.server_lr = server_lr
        self.server_momentum = server_momentum
        self.n_shuffles = n_shuffles
        self.shuffle_p = shuffle_p
        self.warmup_steps = warmup_steps
        self.sample_weighted = sample_weighted
        self.seed = seed

    def _federation_config(self) -> FederationConfig:
        return FederationConfig(
            n_clients=self.n_clients, participation=self.participation,
            local_epochs=self.local_epochs, rounds=self.rounds,
            batch_size=self.batch_size, alpha=self.alpha, lr=self.lr,
            momentum=self.momentum, algorithm=self.algorithm,
            prox_mu=self.prox_mu, server_lr=self.server_lr,
            server_momentum=self.server_momentum,
            pan=PanConfig(mode=self.pan_mode, amplitude=self.amplitude,
                          period=self.period),
            n_shuffles=self.n_shuffles, shuffle_p=self.shuffle_p,
            hidden_sizes=tuple(self.hidden_sizes),
            warmup_steps=self.warmup_steps,
            sample_weighted=self.sample_weighted, seed=self.seed)

    def fit(self, X, y, X_val=None, y_val=None):
        """Run the federated loop; round accuracies come from the validation
        pair when given, else from the training set."""
        X, encoded = self._validate_fit(X, y)
        train = Dataset(X, encoded, n_classes=len(self.classes_))
        if X_val is not None:
            X_val = check_array(X_val, dtype=np.float64)
            y_val = np.searchsorted(self.classes_, np.asarray(y_val))
            monitor = Dataset(X_val, y_val, n_classes=len(self.classes_))
        else:
            monitor = train
        log = run_experiment(self._federation_config(), train, monitor)
        self.model_ = log.model
        self.history_ = log
        self.clients_ = log.clients
        return self
