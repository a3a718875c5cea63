"""scikit-learn compatible wrappers around the encoder and the three networks.

``SectionEncoder`` turns :class:`SectionHistory` records into 18 x 42 feature
matrices. ``PavementRegressor`` and ``PavementClassifier`` train a network on
such matrices; ``y`` is given in original units (regression) or as levels 1-4
(classification).
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .architectures import ARCHITECTURES, N_CLASSES, build_model
from .pms.encoding import N_FEATURES, Dataset, IndicatorScaler, encode_section
from .pms.schema import N_INPUT_YEARS, SectionHistory
from .training import TrainingConfig, seed_streams, train

FEATURE_SHAPE = (N_INPUT_YEARS, N_FEATURES)


def _check_sections(X):
    if isinstance(X, SectionHistory):
        X = [X]
    X = list(X)
    for s in X:
        if not isinstance(s, SectionHistory):
            raise TypeError(f"expected SectionHistory records, got {type(s).__name__}")
    return X


def check_features(X):
    """Validate a batch of feature matrices; flat (N, 756) rows are reshaped."""
    X = check_array(X, allow_nd=True, dtype=np.float64)
    if X.ndim == 2 and X.shape[1] == FEATURE_SHAPE[0] * FEATURE_SHAPE[1]:
        X = X.reshape(-1, *FEATURE_SHAPE)
    if X.shape[1:] != FEATURE_SHAPE:
        raise ValueError(f"expected feature matrices of shape {FEATURE_SHAPE}, got {X.shape[1:]}")
    return X


class SectionEncoder(TransformerMixin, BaseEstimator):
    """Fit the indicator scaler on sections, then encode them as feature matrices."""

    def __init__(self, cap_percentile=99.5):
        self.cap_percentile = cap_percentile

    def fit(self, X, y=None):
        X = _check_sections(X)
        self.scaler_ = IndicatorScaler(self.cap_percentile).fit(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "scaler_")
        X = _check_sections(X)
        if not X:
            return np.zeros((0, *FEATURE_SHAPE))
        return np.stack([encode_section(s, self.scaler_).values for s in X])


class _PavementNet(BaseEstimator):
    _task = None
    _head = None

    def __init__(self, architecture="cnn", epochs=100, batch_size=64, optimizer="adam",
                 lr=1e-3, seed=0):
        self.architecture = architecture
        self.epochs = epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.lr = lr
        self.seed = seed

    def _config(self):
        return TrainingConfig(epochs=self.epochs, batch_size=self.batch_size,
                              optimizer=self.optimizer, lr=self.lr, seed=self.seed)

    def _fit_dataset(self, X, y, y_raw, lo=0.0, hi=1.0):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        config = self._config()
        ds = Dataset("", self._task, X, y, y_raw, list(range(len(X))),
                     np.zeros(len(X), dtype=bool), lo, hi)
        self.model_ = build_model(self.architecture, self._head, seed_streams(self.seed)["init"])
        self.run_ = train(self.model_, ds, config)
        self.history_ = self.run_.history
        self.n_features_in_ = X.shape[1] * X.shape[2]
        return self

    def _raw_output(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict(check_features(X))


class PavementRegressor(RegressorMixin, _PavementNet):
    """Network with the sigmoid head; predictions are in the target's units.

    Targets are scaled to [0, 1] with ``target_range`` (lo, hi); by default
    the range of the training targets.
    """

    _task = "regression"
    _head = "regression_1"

    def __init__(self, architecture="cnn", epochs=100, batch_size=64, optimizer="adam",
                 lr=1e-3, seed=0, target_range=None):
        super().__init__(architecture, epochs, batch_size, optimizer, lr, seed)
        self.target_range = target_range

    def fit(self, X, y):
        X = check_features(X)
        y = check_array(y, ensure_2d=False, dtype=np.float64)
        check_consistent_length(X, y)
        lo, hi = self.target_range if self.target_range is not None else (y.min(), y.max())
        lo, hi = float(lo), float(hi)
        if hi < lo:
            raise ValueError(f"target_range must satisfy lo <= hi, got ({lo}, {hi})")
        self.target_lo_, self.target_hi_ = lo, hi
        span = hi - lo
        scaled = np.zeros_like(y) if span == 0 else np.clip((y - lo) / span, 0.0, 1.0)
        return self._fit_dataset(X, scaled, y, lo, hi)

    def predict(self, X):
        out = self._raw_output(X)[:, 0]
        return self.target_lo_ + out * (self.target_hi_ - self.target_lo_)


class PavementClassifier(ClassifierMixin, _PavementNet):
    """Network with the 4-way softmax head; labels are levels 1-4."""

    _task = "classification"
    _head = "classification_4"

    def fit(self, X, y):
        X = check_features(X)
        y = check_array(y, ensure_2d=False, dtype=None)
        check_consistent_length(X, y)
        levels = np.asarray(y).astype(np.int64)
        if not np.array_equal(levels, y) or levels.min() < 1 or levels.max() > N_CLASSES:
            raise ValueError(f"labels must be integer levels 1..{N_CLASSES}")
        self.classes_ = np.arange(1, N_CLASSES + 1)
        return self._fit_dataset(X, levels - 1, levels.astype(np.float64))

    def predict_proba(self, X):
        return self._raw_output(X)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

