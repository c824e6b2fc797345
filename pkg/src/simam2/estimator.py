"""scikit-learn wrappers around the bimodal network and the unimodal attention."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y, validate_data

from .energy import DEFAULT_LAMBDA, DEFAULT_S, simam_unimodal
from .harness.config import ExperimentConfig
from .harness.data import Split
from .harness.training import fit_model
from .tensor import no_grad

__all__ = ["SimAM2Classifier", "SimAMTransformer"]


class SimAM2Classifier(ClassifierMixin, BaseEstimator):
    """Two-stream classifier on column-stacked modalities.

    ``X`` holds the vision block in its first ``n_features_v`` columns and the
    audio block in the rest. Training uses plain SGD with momentum for a
    fixed number of epochs; with no validation split the kept parameters are
    those of the epoch with the best training accuracy.

    Parameters mirror :class:`~simam2.harness.ExperimentConfig`; ``lam`` is
    the energy regulariser (``lambda`` in config files).
    """

    def __init__(self, n_features_v: int = 1, fusion: str = "summation-learnable", simam2: bool = True,
                 scheme: str = "decoupling-free", lam: float = DEFAULT_LAMBDA, s: float = DEFAULT_S,
                 alpha: float = 0.1, ge_enabled: bool = True, channels: int = 32, hidden: int = 32,
                 learning_rate: float = 0.05, momentum: float = 0.9, epochs: int = 30, batch_size: int = 64,
                 random_state: int = 0):
        self.n_features_v = n_features_v
        self.fusion = fusion
        self.simam2 = simam2
        self.scheme = scheme
        self.lam = lam
        self.s = s
        self.alpha = alpha
        self.ge_enabled = ge_enabled
        self.channels = channels
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def _config(self) -> ExperimentConfig:
        return ExperimentConfig(
            fusion=self.fusion, simam2=self.simam2, scheme=self.scheme, lambda_=self.lam, s=self.s,
            alpha=self.alpha, ge_enabled=self.ge_enabled, channels=self.channels, hidden=self.hidden,
            learning_rate=self.learning_rate, momentum=self.momentum, epochs=self.epochs,
            batch_size=self.batch_size, seed=self.random_state).validate()

    def _split(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return X[:, :self.n_features_v], X[:, self.n_features_v:]

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        self.n_features_in_ = X.shape[1]
        if not 1 <= self.n_features_v < X.shape[1]:
            raise ValueError(f"n_features_v must be in [1, {X.shape[1] - 1}], got {self.n_features_v}")
        self.classes_, codes = np.unique(y, return_inverse=True)
        if self.classes_.size < 2:
            raise ValueError("need at least two classes")
        x_v, x_a = self._split(X)
        self.result_ = fit_model(self._config(), Split(x_v, x_a, codes.astype(np.int64)), None,
                                 int(self.classes_.size))
        self.model_ = self.result_.checkpoint.build_model()
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        x_v, x_a = self._split(X)
        with no_grad():
            fwd = self.model_.forward(x_v, x_a, training=False, decouple=False)
            return np.array(fwd.logits.softmax(axis=1).data)

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]


class SimAMTransformer(TransformerMixin, BaseEstimator):
    """Parameter-free energy attention on one modality.

    Rows of a 2-D ``X`` are treated as one channel each; arrays of shape
    ``(n, channels, *spatial)`` get per-channel statistics. Fitting only
    records the input width.
    """

    def __init__(self, lam: float = DEFAULT_LAMBDA):
        self.lam = lam

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, allow_nd=True)
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        self.n_features_in_ = X.shape[1]
        self.input_shape_ = X.shape[1:]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "input_shape_")
        X = check_array(X, dtype=np.float64, allow_nd=True)
        if X.shape[1:] != self.input_shape_:
            raise ValueError(f"expected samples of shape {self.input_shape_}, got {X.shape[1:]}")
        return np.array(simam_unimodal(X, self.lam).data)
