"""Feature-matrix encoding, per-indicator min-max scaling, and train/test splitting.

A section becomes an 18 x 42 matrix: one row per year 2000-2017 holding the 21
scaled indicators, the scaled years since the last treatment, and a one-hot
block over the 20 work types.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..tensor import make_rng
from .schema import (
    INDICATORS,
    INPUT_YEARS,
    N_INDICATORS,
    N_INPUT_YEARS,
    N_WORK_TYPES,
    SectionHistory,
    indicator,
)

N_FEATURES = N_INDICATORS + 1 + N_WORK_TYPES
S_COLUMN = N_INDICATORS
WORK_COLUMNS = slice(N_INDICATORS + 1, N_FEATURES)
# years-since-treatment divisor; larger gaps saturate at 1
S_SCALE = 18.0
TEST_FRACTION = 0.2
MIN_SPLIT_SIZE = 5


def _values(X):
    if isinstance(X, SectionHistory):
        return X.values
    if len(X) and isinstance(X[0], SectionHistory):
        return np.concatenate([s.values for s in X])
    return np.asarray(X, dtype=np.float64).reshape(-1, N_INDICATORS)


class IndicatorScaler(TransformerMixin, BaseEstimator):
    """Per-indicator min-max scaling onto [0, 1].

    Indicators with a published range use it directly. Open-ended (">= 0")
    indicators map [0, p] where p is the ``cap_percentile`` of the training
    values; anything above p clamps to 1. A zero-width range is recorded in
    ``degenerate_`` and every value maps to 0.
    """

    def __init__(self, cap_percentile=99.5):
        self.cap_percentile = cap_percentile

    def fit(self, X, y=None):
        values = _values(X)
        if len(values) == 0:
            raise ValueError("cannot fit a scaler on an empty training set")
        lo = np.empty(N_INDICATORS)
        hi = np.empty(N_INDICATORS)
        for j, ind in enumerate(INDICATORS):
            if ind.bounded:
                lo[j], hi[j] = ind.bounds
            else:
                lo[j] = 0.0
                hi[j] = np.percentile(values[:, j], self.cap_percentile)
        self.lo_ = lo
        self.hi_ = hi
        self.degenerate_ = hi <= lo
        return self

    @property
    def span_(self):
        return np.where(self.degenerate_, 1.0, self.hi_ - self.lo_)

    def transform(self, X):
        check_is_fitted(self, "lo_")
        values = np.asarray(X, dtype=np.float64)
        out = np.clip((values - self.lo_) / self.span_, 0.0, 1.0)
        return np.where(self.degenerate_, 0.0, out)

    def inverse_transform(self, X):
        check_is_fitted(self, "lo_")
        return self.lo_ + np.asarray(X, dtype=np.float64) * np.where(self.degenerate_, 0.0, self.span_)

    def normalize(self, value, name):
        j = indicator(name).index - 1
        if self.degenerate_[j]:
            return np.zeros_like(np.asarray(value, dtype=np.float64))
        return np.clip((np.asarray(value, dtype=np.float64) - self.lo_[j]) / self.span_[j], 0.0, 1.0)

    def denormalize(self, value, name):
        j = indicator(name).index - 1
        scale = 0.0 if self.degenerate_[j] else self.span_[j]
        return self.lo_[j] + np.asarray(value, dtype=np.float64) * scale

    def bounds(self, name):
        j = indicator(name).index - 1
        return float(self.lo_[j]), float(self.hi_[j])

    def to_dict(self):
        check_is_fitted(self, "lo_")
        return {
            "cap_percentile": self.cap_percentile,
            "indicators": [
                {"name": ind.name, "lo": float(self.lo_[j]), "hi": float(self.hi_[j]),
                 "degenerate": bool(self.degenerate_[j])}
                for j, ind in enumerate(INDICATORS)
            ],
        }

    @classmethod
    def from_dict(cls, d):
        scaler = cls(d["cap_percentile"])
        rows = d["indicators"]
        scaler.lo_ = np.array([r["lo"] for r in rows])
        scaler.hi_ = np.array([r["hi"] for r in rows])
        scaler.degenerate_ = np.array([r["degenerate"] for r in rows])
        return scaler


def fit_normalizer(train_sections, cap_percentile=99.5):
    return IndicatorScaler(cap_percentile).fit(train_sections)


@dataclass
class FeatureMatrix:
    values: np.ndarray
    targets: np.ndarray  # raw 2018 value of every indicator


def years_since_treatment(section, years=INPUT_YEARS):
    """Unscaled s_t, clamped at zero before the treatment year."""
    return np.maximum(0, np.asarray(years) - section.last_work_year).astype(np.float64)


def encode_section(section, normalizer):
    m = np.zeros((N_INPUT_YEARS, N_FEATURES))
    m[:, :N_INDICATORS] = normalizer.transform(section.values[:N_INPUT_YEARS])
    m[:, S_COLUMN] = np.minimum(years_since_treatment(section) / S_SCALE, 1.0)
    m[:, N_INDICATORS + section.last_work] = 1.0
    return FeatureMatrix(m, section.values[-1].copy())


def split(n, test_fraction=TEST_FRACTION, rng=0):
    """Boolean test mask over ``n`` samples; round(n * test_fraction) are test."""
    if not isinstance(n, (int, np.integer)):
        n = len(n)
    if n < MIN_SPLIT_SIZE:
        raise ValueError(f"need at least {MIN_SPLIT_SIZE} samples to split, got {n}")
    n_test = int(round(n * test_fraction))
    order = make_rng(rng).permutation(n)
    mask = np.zeros(n, dtype=bool)
    mask[order[:n_test]] = True
    return mask


@dataclass
class Dataset:
    """Encoded samples for one studied indicator.

    ``y`` is what the network trains on (scaled value or class index), ``y_raw``
    the 2018 value in original units. Regression outputs map back to original
    units through ``target_lo + y * (target_hi - target_lo)``.
    """

    indicator: str
    task: str
    X: np.ndarray
    y: np.ndarray
    y_raw: np.ndarray
    section_ids: list
    is_test: np.ndarray = None
    target_lo: float = 0.0
    target_hi: float = 1.0
    normalizer: IndicatorScaler = field(default=None, repr=False)

    def __post_init__(self):
        if self.task not in ("regression", "classification"):
            raise ValueError(f"task must be 'regression' or 'classification', got {self.task!r}")

    def __len__(self):
        return len(self.y)

    def subset(self, mask):
        mask = np.asarray(mask)
        if mask.dtype == bool:
            ids = [s for s, keep in zip(self.section_ids, mask) if keep]
        else:
            ids = [self.section_ids[i] for i in mask]
        return replace(self, X=self.X[mask], y=self.y[mask], y_raw=self.y_raw[mask], section_ids=ids,
                       is_test=None if self.is_test is None else self.is_test[mask])

    def partition(self, name):
        if self.is_test is None:
            raise ValueError("dataset has no split assignment")
        if name not in ("train", "test"):
            raise ValueError(f"partition must be 'train' or 'test', got {name!r}")
        return self.subset(self.is_test if name == "test" else ~self.is_test)

    @property
    def train(self):
        return self.partition("train")

    @property
    def test(self):
        return self.partition("test")

    def denormalize(self, scaled):
        return self.target_lo + np.asarray(scaled, dtype=np.float64) * (self.target_hi - self.target_lo)


def encode_dataset(sections, name, normalizer, is_test=None):
    """One feature matrix per section; the studied indicator's 2018 value is the target."""
    ind = indicator(name)
    j = ind.index - 1
    if sections:
        X = np.stack([encode_section(s, normalizer).values for s in sections])
    else:
        X = np.zeros((0, N_INPUT_YEARS, N_FEATURES))
    y_raw = np.array([s.values[-1, j] for s in sections], dtype=np.float64)
    if ind.discrete:
        y = y_raw.astype(np.int64) - 1
    else:
        y = normalizer.normalize(y_raw, ind.name)
    lo = float(normalizer.lo_[j])
    hi = lo if normalizer.degenerate_[j] else float(normalizer.hi_[j])
    mask = None if is_test is None else np.asarray(is_test, dtype=bool)
    return Dataset(ind.name, "classification" if ind.discrete else "regression", X, y, y_raw,
                   [s.section_id for s in sections], mask, lo, hi, normalizer)


def prepare_dataset(sections, name, seed=0, test_fraction=TEST_FRACTION, cap_percentile=99.5):
    """Split by section, fit the scaler on the training part only, encode everything."""
    mask = split(len(sections), test_fraction, seed)
    normalizer = fit_normalizer([s for s, t in zip(sections, mask) if not t], cap_percentile)
    return encode_dataset(sections, name, normalizer, mask)
