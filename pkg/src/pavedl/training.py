"""Optimizers, metrics, the epoch loop, and evaluation."""

from dataclasses import asdict, dataclass, field
import copy
import logging
import math
import time

import numpy as np

from .architectures import default_loss
from .tensor import DTYPE, spawn_rngs

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Non-finite loss or gradient during training."""


class UndefinedMetricError(ValueError):
    """R² is undefined when every actual value is identical."""


# every random draw of a run comes from one of these children of the run seed
SEED_STREAMS = ("shuffle", "dropout", "split", "init")


def seed_streams(seed):
    """``{stream name: Generator}`` derived from one integer seed."""
    return dict(zip(SEED_STREAMS, spawn_rngs(seed, len(SEED_STREAMS))))


# --------------------------------------------------------------------------
# metrics

def r2_score(actual, predicted):
    """Coefficient of determination, 1 - SS_res / SS_tot.

    Raises :class:`UndefinedMetricError` when SS_tot is zero.
    """
    y = np.asarray(actual, dtype=DTYPE).ravel()
    yhat = np.asarray(predicted, dtype=DTYPE).ravel()
    if len(y) != len(yhat) or len(y) == 0:
        raise ValueError(f"need equal nonzero lengths, got {len(y)} and {len(yhat)}")
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedMetricError("R² undefined: actual values have zero variance")
    return 1.0 - ss_res / ss_tot


def accuracy(actual, predicted):
    y = np.asarray(actual).ravel()
    yhat = np.asarray(predicted).ravel()
    if len(y) != len(yhat) or len(y) == 0:
        raise ValueError(f"need equal nonzero lengths, got {len(y)} and {len(yhat)}")
    return float(np.count_nonzero(y == yhat)) / len(y)


def majority_baseline(train_labels, test_labels):
    """Accuracy on ``test_labels`` of always predicting the most common training label."""
    values, counts = np.unique(train_labels, return_counts=True)
    return accuracy(test_labels, np.full(len(test_labels), values[np.argmax(counts)]))


# --------------------------------------------------------------------------
# optimizers

def _check_finite(grads):
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name}")


class SGD:
    def __init__(self, lr=0.01):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr

    def step(self, params, grads):
        _check_finite(grads)
        for name, p in params.items():
            p -= self.lr * grads[name]


class Adam:
    """Bias-corrected Adam; moments live in ``self.m`` / ``self.v`` keyed by parameter name."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        _check_finite(grads)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(config):
    if config.optimizer == "sgd":
        return SGD(config.lr)
    if config.optimizer == "adam":
        return Adam(config.lr, config.beta1, config.beta2, config.eps)
    raise ValueError(f"unknown optimizer {config.optimizer!r}")


def optimizer_step(params, grads, state, config):
    """Functional form: returns ``(new_params, new_state)`` and leaves the inputs untouched.

    ``state`` is the optimizer object from a previous call, or None to start fresh.
    """
    opt = make_optimizer(config) if state is None else copy.deepcopy(state)
    new = {k: np.array(v, dtype=DTYPE) for k, v in params.items()}
    opt.step(new, grads)
    return new, opt


# --------------------------------------------------------------------------
# configuration and results

@dataclass
class TrainingConfig:
    epochs: int = 100
    batch_size: int = 64
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: str = None
    deterministic: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    train_metric: float
    test_metric: float
    train_loss: float


@dataclass
class Evaluation:
    metric: str  # "r2" or "accuracy"
    value: float  # None when R² is undefined
    actual: np.ndarray
    predicted: np.ndarray
    section_ids: list
    probabilities: np.ndarray = None


@dataclass
class TrainingRun:
    config: TrainingConfig
    history: list = field(default_factory=list)
    model: object = None
    wall_time: float = 0.0
    metric: str = None
    final: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "metric": self.metric,
            "history": [asdict(r) for r in self.history],
            "final": self.final,
            "wall_time": self.wall_time,
        }


# --------------------------------------------------------------------------
# evaluation and the training loop

def metric_name(dataset):
    return "accuracy" if dataset.task == "classification" else "r2"


def evaluate(model, dataset, batch_size=256):
    """Inference-mode metric plus per-section (actual, predicted) pairs in original units."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty partition")
    out = model.predict(dataset.X, batch_size)
    if dataset.task == "classification":
        classes = np.argmax(out, axis=1)
        return Evaluation("accuracy", accuracy(dataset.y, classes), dataset.y_raw.copy(),
                          (classes + 1).astype(DTYPE), list(dataset.section_ids), out)
    predicted = dataset.denormalize(out[:, 0])
    try:
        value = r2_score(dataset.y_raw, predicted)
    except UndefinedMetricError:
        value = None
    return Evaluation("r2", value, dataset.y_raw.copy(), predicted, list(dataset.section_ids))


def train(model, dataset, config=None, callback=None):
    """Minibatch training on ``dataset.train`` with per-epoch train/test metrics.

    Parameters are updated in place on ``model``. The test partition is only
    monitored; nothing is selected on it.
    """
    config = config or TrainingConfig()
    loss_kind = config.loss or default_loss(model.head)
    expected = "classification_4" if dataset.task == "classification" else "regression_1"
    if model.head != expected:
        raise ValueError(f"{dataset.indicator} needs the {expected} head, model has {model.head}")
    train_part = dataset.partition("train")
    test_part = dataset.partition("test")
    streams = seed_streams(config.seed)
    shuffle_rng, dropout_rng = streams["shuffle"], streams["dropout"]
    optimizer = make_optimizer(config)
    params = model.parameters()
    run = TrainingRun(config, model=model, metric=metric_name(dataset))
    start = time.perf_counter()
    n = len(train_part)
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for b, lo in enumerate(range(0, n, config.batch_size)):
            idx = order[lo:lo + config.batch_size]
            loss, grads = model.loss_and_grad(train_part.X[idx], train_part.y[idx], loss_kind,
                                              training=True, rng=dropout_rng)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            optimizer.step(params, grads)
            total += loss * len(idx)
        record = EpochRecord(
            epoch,
            evaluate(model, train_part).value,
            evaluate(model, test_part).value if len(test_part) else None,
            total / n,
        )
        run.history.append(record)
        log.info("epoch %d: loss %.5f train %s test %s", epoch, record.train_loss,
                 record.train_metric, record.test_metric)
        if callback is not None:
            callback(record)
    run.wall_time = time.perf_counter() - start
    if run.history:
        last = run.history[-1]
        run.final = {"train": last.train_metric, "test": last.test_metric}
    return run
