"""The three network architectures, their losses, and shape/parameter tables."""

from dataclasses import dataclass, field

import numpy as np

from .layers import LayerSpec, make_layer
from .tensor import DTYPE, ShapeError, make_rng

HEADS = ("regression_1", "classification_4")
LOSSES = ("mse", "categorical_cross_entropy")
ARCHITECTURES = ("cnn", "lstm", "cnn_lstm")
N_CLASSES = 4
# smallest probability fed to log() in cross-entropy
_PROB_FLOOR = 1e-300


def head_layer(head):
    if head == "regression_1":
        return LayerSpec("dense", units=1, activation="sigmoid")
    if head == "classification_4":
        return LayerSpec("dense", units=N_CLASSES, activation="softmax")
    raise ValueError(f"unknown head {head!r}; expected one of {HEADS}")


def default_loss(head):
    return "mse" if head == "regression_1" else "categorical_cross_entropy"


@dataclass(frozen=True)
class ModelSpec:
    name: str
    layers: tuple
    head: str
    input_shape: tuple

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))

    def to_dict(self):
        return {
            "name": self.name,
            "head": self.head,
            "input_shape": list(self.input_shape),
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], tuple(LayerSpec.from_dict(x) for x in d["layers"]),
                   d["head"], tuple(d["input_shape"]))


def cnn_spec(head, input_shape=(18, 42, 1), filters=(32, 64, 128), dense_units=128,
             dropout=(0.25, 0.25, 0.4, 0.3), kernel_size=3, activation="relu"):
    layers = []
    for f, rate in zip(filters, dropout[:len(filters)]):
        layers += [
            LayerSpec("conv2d", filters=f, kernel_size=kernel_size, activation=activation),
            LayerSpec("maxpool2d", pool_size=2),
            LayerSpec("dropout", rate=rate),
        ]
    layers += [
        LayerSpec("flatten"),
        LayerSpec("dense", units=dense_units, activation=activation),
        LayerSpec("dropout", rate=dropout[len(filters)]),
        head_layer(head),
    ]
    return ModelSpec("cnn", layers, head, input_shape)


def lstm_spec(head, input_shape=(18, 42), units=50):
    return ModelSpec("lstm", [LayerSpec("lstm", units=units), head_layer(head)], head, input_shape)


def cnn_lstm_spec(head, input_shape=(18, 42, 1), filters=32, units=50, kernel_size=3,
                  activation="relu"):
    layers = [
        LayerSpec("time_distributed", inner=LayerSpec("conv1d", filters=filters,
                                                       kernel_size=kernel_size, activation=activation)),
        LayerSpec("time_distributed", inner=LayerSpec("maxpool1d", pool_size=2)),
        LayerSpec("time_distributed", inner=LayerSpec("flatten")),
        LayerSpec("lstm", units=units),
        head_layer(head),
    ]
    return ModelSpec("cnn_lstm", layers, head, input_shape)


SPEC_BUILDERS = {"cnn": cnn_spec, "lstm": lstm_spec, "cnn_lstm": cnn_lstm_spec}


class Model:
    """A stack of layers built from a :class:`ModelSpec`.

    Parameters are created once at construction from ``rng``; ``forward``/``backward``
    never modify them. Gradients are returned, not applied.
    """

    def __init__(self, spec, rng=0):
        self.spec = spec
        rng = make_rng(rng)
        self.layers = []
        self.shapes = []
        shape = spec.input_shape
        for s in spec.layers:
            layer = make_layer(s)
            shape = layer.build(shape, rng)
            self.layers.append(layer)
            self.shapes.append(shape)
        self.mode = "infer"

    @property
    def head(self):
        return self.spec.head

    @property
    def output_shape(self):
        return self.shapes[-1]

    def layer_names(self):
        return [f"{i:02d}_{layer.kind}" for i, layer in enumerate(self.layers)]

    def parameters(self):
        """Ordered ``{name: array}`` view of every parameter, in declaration order."""
        out = {}
        for lname, layer in zip(self.layer_names(), self.layers):
            for pname, p in layer.params.items():
                out[f"{lname}/{pname}"] = p
        return out

    def gradients(self):
        out = {}
        for lname, layer in zip(self.layer_names(), self.layers):
            for pname, g in layer.grads.items():
                out[f"{lname}/{pname}"] = g
        return out

    def set_parameters(self, values):
        current = self.parameters()
        if set(values) != set(current):
            missing = sorted(set(current) - set(values))
            extra = sorted(set(values) - set(current))
            raise KeyError(f"parameter names differ (missing {missing}, unexpected {extra})")
        for name, p in current.items():
            v = np.asarray(values[name], dtype=DTYPE)
            if v.shape != p.shape:
                raise ShapeError(f"{name}: expected shape {p.shape}, got {v.shape}")
            p[...] = v

    def count_params(self):
        return sum(layer.count_params() for layer in self.layers)

    def summary(self):
        """Rows of (layer name, output shape, parameter count)."""
        return [(name, shape, layer.count_params())
                for name, layer, shape in zip(self.layer_names(), self.layers, self.shapes)]

    def _prepare(self, x):
        x = np.asarray(x, dtype=DTYPE)
        want = self.spec.input_shape
        if x.shape[1:] == want:
            return x
        if int(np.prod(x.shape[1:])) == int(np.prod(want)) and x.shape[1:3] == want[:2]:
            return x.reshape(x.shape[0], *want)
        raise ShapeError(f"model {self.spec.name} expects samples of shape {want}, got {x.shape[1:]}")

    def forward(self, x, training=False, rng=None):
        """Batched forward pass; ``x`` is (N, *input_shape) or (N, 18, 42) feature matrices."""
        self.mode = "train" if training else "infer"
        h = self._prepare(x)
        if training and rng is not None:
            rng = make_rng(rng)
        for layer in self.layers:
            h = layer.forward(h, training=training, rng=rng)
        return h

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def predict(self, x, batch_size=256):
        """Inference-mode outputs, evaluated in fixed-size chunks."""
        x = np.asarray(x, dtype=DTYPE)
        if len(x) == 0:
            return np.zeros((0, *self.output_shape), dtype=DTYPE)
        return np.concatenate([self.forward(x[i:i + batch_size])
                               for i in range(0, len(x), batch_size)])

    def loss_and_grad(self, x, y, loss=None, training=True, rng=None, compute_grad=True):
        """Mean loss over the batch and the ``{name: gradient}`` of every parameter."""
        loss = loss or default_loss(self.head)
        if len(x) == 0:
            raise ValueError("empty batch")
        pred = self.forward(x, training=training, rng=rng)
        value, dpred = loss_value_and_grad(loss, pred, y, self.head)
        if not compute_grad:
            self._drop_caches()
            return value, None
        self.backward(dpred)
        return value, {k: g.copy() for k, g in self.gradients().items()}

    def _drop_caches(self):
        for layer in self.layers:
            layer._cache = None
            inner = getattr(layer, "inner", None)
            if inner is not None:
                inner._cache = None

    def __repr__(self):
        return f"Model({self.spec.name}, head={self.head}, params={self.count_params()})"


def build_model(name, head, rng=0, **kwargs):
    try:
        builder = SPEC_BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown architecture {name!r}; expected one of {ARCHITECTURES}")
    return Model(builder(head, **kwargs), rng)


def build_cnn(head, rng=0, **kwargs):
    return build_model("cnn", head, rng, **kwargs)


def build_lstm(head, rng=0, **kwargs):
    return build_model("lstm", head, rng, **kwargs)


def build_cnn_lstm(head, rng=0, **kwargs):
    return build_model("cnn_lstm", head, rng, **kwargs)


def count_params(model):
    return model.count_params()


def forward(model, x):
    """Inference-mode prediction for one feature matrix or a batch of them."""
    x = np.asarray(x, dtype=DTYPE)
    single = x.shape == model.spec.input_shape or x.shape == model.spec.input_shape[:2]
    out = model.forward(x[None] if single else x)
    if model.head == "regression_1":
        out = out[..., 0]
    return out[0] if single else out


def loss_and_grad(model, x, y, loss=None, rng=None):
    return model.loss_and_grad(x, y, loss, rng=rng)


# --------------------------------------------------------------------------
# losses

def _check_targets(kind, pred, target, head):
    target = np.asarray(target)
    if len(target) != len(pred):
        raise ValueError(f"{len(target)} targets for {len(pred)} predictions")
    if kind == "mse":
        if head is not None and head != "regression_1":
            raise ValueError("mse loss needs the regression head")
        return target.astype(DTYPE).reshape(pred.shape)
    if head is not None and head != "classification_4":
        raise ValueError("cross-entropy needs the classification head")
    if target.ndim != 1 or not np.issubdtype(target.dtype, np.integer):
        raise ValueError("cross-entropy targets must be a 1-D array of class indices")
    if target.min() < 0 or target.max() >= pred.shape[1]:
        raise ValueError(f"class indices must lie in [0, {pred.shape[1]})")
    return target


def loss_value_and_grad(kind, pred, target, head=None):
    """Mean loss and its gradient with respect to ``pred``."""
    pred = np.asarray(pred, dtype=DTYPE)
    target = _check_targets(kind, pred, target, head)
    n = len(pred)
    if kind == "mse":
        diff = pred - target
        return float(np.mean(diff * diff)), 2.0 * diff / diff.size
    if kind == "categorical_cross_entropy":
        rows = np.arange(n)
        p = np.maximum(pred[rows, target], _PROB_FLOOR)
        grad = np.zeros_like(pred)
        grad[rows, target] = -1.0 / (n * p)
        return float(-np.mean(np.log(p))), grad
    raise ValueError(f"unknown loss {kind!r}; expected one of {LOSSES}")


def loss_value(kind, pred, target):
    return loss_value_and_grad(kind, pred, target)[0]


# --------------------------------------------------------------------------
# published per-layer tables: (output shape, parameter count); the head row is keyed by head

CNN_TABLE = [
    ((18, 42, 32), 320),
    ((9, 21, 32), 0),
    ((9, 21, 32), 0),
    ((9, 21, 64), 18496),
    ((5, 11, 64), 0),
    ((5, 11, 64), 0),
    ((5, 11, 128), 73856),
    ((3, 6, 128), 0),
    ((3, 6, 128), 0),
    ((2304,), 0),
    ((128,), 295040),
    ((128,), 0),
]
LSTM_TABLE = [((50,), 18600)]
CNN_LSTM_TABLE = [
    ((18, 42, 32), 128),
    ((18, 21, 32), 0),
    ((18, 672), 0),
    ((50,), 144600),
]
HEAD_PARAMS = {
    "cnn": {"regression_1": 129, "classification_4": 516},
    "lstm": {"regression_1": 51, "classification_4": 204},
    "cnn_lstm": {"regression_1": 51, "classification_4": 204},
}
TABLES = {"cnn": CNN_TABLE, "lstm": LSTM_TABLE, "cnn_lstm": CNN_LSTM_TABLE}


def expected_table(name, head):
    rows = list(TABLES[name])
    rows.append(((1,) if head == "regression_1" else (4,), HEAD_PARAMS[name][head]))
    return rows


def table_mismatches(model):
    """Differences between a default-configured model and its published table; empty if faithful.

    The flatten row is implied by the tables (2304 = 3*6*128) rather than printed.
    """
    expected = expected_table(model.spec.name, model.head)
    got = [(tuple(shape), n) for _, shape, n in model.summary()]
    problems = []
    if len(expected) != len(got):
        problems.append(f"{len(got)} layers, expected {len(expected)}")
    for i, (want, have) in enumerate(zip(expected, got)):
        if want != have:
            problems.append(f"layer {i}: got shape {have[0]} / {have[1]} params, expected {want[0]} / {want[1]}")
    return problems
