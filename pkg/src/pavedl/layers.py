"""Layers with hand-written forward and backward passes.

Every layer works on batches: the leading axis of every input is the sample
axis. Shapes quoted without it (``input_shape``/``output_shape``) are
per-sample, matching how architecture tables are usually written.

A layer caches what its backward pass needs during ``forward`` and raises
:class:`BackwardError` if ``backward`` is called without one.
"""

from dataclasses import dataclass, field, fields
import math

import numpy as np

from .tensor import DTYPE, ShapeError, init_weights, make_rng, sigmoid, softmax

__all__ = [
    "ACTIVATIONS",
    "BackwardError",
    "Conv1D",
    "Conv2D",
    "Dense",
    "Dropout",
    "Flatten",
    "LSTM",
    "Layer",
    "LayerSpec",
    "LstmParams",
    "LstmState",
    "MaxPool1D",
    "MaxPool2D",
    "TimeDistributed",
    "conv1d_forward",
    "conv2d_forward",
    "dense_forward",
    "dropout",
    "lstm_cell_step",
    "lstm_layer_forward",
    "make_layer",
    "maxpool_forward",
    "time_distributed",
]


class BackwardError(RuntimeError):
    """backward() called without a matching forward pass."""


# --------------------------------------------------------------------------
# activations: forward on pre-activation z, backward from the output y

def _linear_grad(y, g):
    return g


def _relu_grad(y, g):
    return g * (y > 0)


def _sigmoid_grad(y, g):
    return g * y * (1.0 - y)


def _tanh_grad(y, g):
    return g * (1.0 - y * y)


def _softmax_grad(y, g):
    return y * (g - np.sum(g * y, axis=-1, keepdims=True))


ACTIVATIONS = {
    "linear": (lambda z: z, _linear_grad),
    "relu": (lambda z: np.maximum(z, 0.0), _relu_grad),
    "sigmoid": (sigmoid, _sigmoid_grad),
    "tanh": (np.tanh, _tanh_grad),
    "softmax": (softmax, _softmax_grad),
}


def _check_activation(name):
    if name not in ACTIVATIONS:
        raise ValueError(f"unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}")
    return name


# --------------------------------------------------------------------------
# declarative layer description

_REQUIRED = {
    "conv2d": {"filters", "kernel_size", "activation"},
    "conv1d": {"filters", "kernel_size", "activation"},
    "maxpool2d": {"pool_size"},
    "maxpool1d": {"pool_size"},
    "dropout": {"rate"},
    "flatten": set(),
    "dense": {"units", "activation"},
    "lstm": {"units"},
    "time_distributed": {"inner"},
}


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer.

    Exactly the hyperparameters the kind needs must be set; the rest stay None.
    """

    kind: str
    filters: int = None
    kernel_size: int = None
    pool_size: int = None
    rate: float = None
    units: int = None
    activation: str = None
    inner: "LayerSpec" = None

    def __post_init__(self):
        if self.kind not in _REQUIRED:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        present = {f.name for f in fields(self) if f.name != "kind" and getattr(self, f.name) is not None}
        required = _REQUIRED[self.kind]
        if present != required:
            raise ValueError(
                f"{self.kind} takes hyperparameters {sorted(required)}, got {sorted(present)}"
            )
        if self.activation is not None:
            _check_activation(self.activation)
        if self.kind == "dropout" and not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")
        if self.kernel_size is not None and self.kernel_size % 2 != 1:
            raise ValueError(f"same padding needs an odd kernel size, got {self.kernel_size}")

    def to_dict(self):
        out = {"kind": self.kind}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "kind" or value is None:
                continue
            out[f.name] = value.to_dict() if f.name == "inner" else value
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "inner" in d:
            d["inner"] = cls.from_dict(d["inner"])
        return cls(**d)


def make_layer(spec):
    """Instantiate an (unbuilt) layer from a :class:`LayerSpec`."""
    k = spec.kind
    if k == "conv2d":
        return Conv2D(spec.filters, spec.kernel_size, spec.activation)
    if k == "conv1d":
        return Conv1D(spec.filters, spec.kernel_size, spec.activation)
    if k == "maxpool2d":
        return MaxPool2D(spec.pool_size)
    if k == "maxpool1d":
        return MaxPool1D(spec.pool_size)
    if k == "dropout":
        return Dropout(spec.rate)
    if k == "flatten":
        return Flatten()
    if k == "dense":
        return Dense(spec.units, spec.activation)
    if k == "lstm":
        return LSTM(spec.units)
    return TimeDistributed(make_layer(spec.inner))


# --------------------------------------------------------------------------
# layer base

class Layer:
    """Base class. Subclasses fill ``params`` in ``build`` and ``grads`` in ``backward``."""

    kind = None

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.input_shape = None
        self._cache = None

    @property
    def built(self):
        return self.input_shape is not None

    def build(self, input_shape, rng=None):
        self.input_shape = tuple(input_shape)
        return self.output_shape(self.input_shape)

    def output_shape(self, input_shape):
        raise NotImplementedError

    def count_params(self):
        return sum(p.size for p in self.params.values())

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def _pop_cache(self):
        if self._cache is None:
            raise BackwardError(f"{type(self).__name__}.backward called without a recorded forward pass")
        cache, self._cache = self._cache, None
        return cache

    def _check_input(self, x):
        x = np.asarray(x, dtype=DTYPE)
        if self.input_shape is not None and x.shape[1:] != self.input_shape:
            raise ShapeError(
                f"{type(self).__name__} expects per-sample shape {self.input_shape}, got {x.shape[1:]}"
            )
        return x

    def __repr__(self):
        return f"{type(self).__name__}()"


# --------------------------------------------------------------------------
# convolution

def _im2col(x, k):
    """(N, *spatial, C) -> (N, *spatial, k, ..., k, C) windows over a zero-padded input."""
    p = k // 2
    n, c = x.shape[0], x.shape[-1]
    spatial = x.shape[1:-1]
    pad = [(0, 0)] + [(p, p)] * len(spatial) + [(0, 0)]
    xp = np.pad(x, pad)
    if len(spatial) == 2:
        h, w = spatial
        cols = np.empty((n, h, w, k, k, c), dtype=DTYPE)
        for i in range(k):
            for j in range(k):
                cols[:, :, :, i, j, :] = xp[:, i:i + h, j:j + w, :]
        return cols
    (length,) = spatial
    cols = np.empty((n, length, k, c), dtype=DTYPE)
    for i in range(k):
        cols[:, :, i, :] = xp[:, i:i + length, :]
    return cols


def _col2im(dcols, spatial, k):
    """Adjoint of :func:`_im2col`: scatter-add window gradients back onto the input."""
    p = k // 2
    n = dcols.shape[0]
    c = dcols.shape[-1]
    if len(spatial) == 2:
        h, w = spatial
        dxp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=DTYPE)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + h, j:j + w, :] += dcols[:, :, :, i, j, :]
        return dxp[:, p:p + h, p:p + w, :]
    (length,) = spatial
    dxp = np.zeros((n, length + 2 * p, c), dtype=DTYPE)
    for i in range(k):
        dxp[:, i:i + length, :] += dcols[:, :, i, :]
    return dxp[:, p:p + length, :]


class _ConvND(Layer):
    nsp = None

    def __init__(self, filters, kernel_size=3, activation="relu"):
        super().__init__()
        if kernel_size % 2 != 1:
            raise ValueError(f"same padding needs an odd kernel size, got {kernel_size}")
        self.filters = int(filters)
        self.kernel_size = int(kernel_size)
        self.activation = _check_activation(activation)

    def output_shape(self, input_shape):
        if len(input_shape) != self.nsp + 1:
            raise ShapeError(f"{type(self).__name__} expects rank-{self.nsp + 1} samples, got {input_shape}")
        return (*input_shape[:-1], self.filters)

    def build(self, input_shape, rng=None):
        out = super().build(input_shape)
        c_in = input_shape[-1]
        kshape = (self.kernel_size,) * self.nsp + (c_in, self.filters)
        self.params = {
            "kernel": init_weights(kshape, "glorot_uniform", rng),
            "bias": init_weights((self.filters,), "zeros", rng),
        }
        return out

    def forward(self, x, training=False, rng=None):
        x = self._check_input(x)
        kernel, bias = self.params["kernel"], self.params["bias"]
        if x.shape[-1] != kernel.shape[-2]:
            raise ShapeError(f"input has {x.shape[-1]} channels, kernel expects {kernel.shape[-2]}")
        cols = _im2col(x, self.kernel_size)
        spatial = x.shape[1:-1]
        flat = cols.reshape(-1, kernel[..., 0].size)
        z = flat @ kernel.reshape(-1, self.filters) + bias
        act, _ = ACTIVATIONS[self.activation]
        y = act(z).reshape(x.shape[0], *spatial, self.filters)
        self._cache = (flat, spatial, y)
        return y

    def backward(self, dy):
        flat, spatial, y = self._pop_cache()
        kernel = self.params["kernel"]
        _, grad = ACTIVATIONS[self.activation]
        dz = grad(y, dy).reshape(-1, self.filters)
        self.grads = {
            "kernel": (flat.T @ dz).reshape(kernel.shape),
            "bias": dz.sum(axis=0),
        }
        dcols = dz @ kernel.reshape(-1, self.filters).T
        n = y.shape[0]
        dcols = dcols.reshape(n, *spatial, *(self.kernel_size,) * self.nsp, kernel.shape[-2])
        return _col2im(dcols, spatial, self.kernel_size)

    def __repr__(self):
        return f"{type(self).__name__}({self.filters}, kernel_size={self.kernel_size}, activation={self.activation!r})"


class Conv2D(_ConvND):
    """Same-padded 2-D cross-correlation on (H, W, C) samples."""

    kind = "conv2d"
    nsp = 2


class Conv1D(_ConvND):
    """Same-padded 1-D cross-correlation on (L, C) samples."""

    kind = "conv1d"
    nsp = 1


def conv2d_forward(x, kernels, bias):
    """Same-padding cross-correlation plus bias, no activation.

    ``x`` is (H, W, C_in) or a batch (N, H, W, C_in); ``kernels`` is (k, k, C_in, F).
    """
    return _conv_functional(Conv2D, x, kernels, bias, 3)


def conv1d_forward(x, kernels, bias):
    """1-D analog of :func:`conv2d_forward`; ``kernels`` is (k, C_in, F)."""
    return _conv_functional(Conv1D, x, kernels, bias, 2)


def _conv_functional(cls, x, kernels, bias, sample_rank):
    x = np.asarray(x, dtype=DTYPE)
    kernels = np.asarray(kernels, dtype=DTYPE)
    single = x.ndim == sample_rank
    if single:
        x = x[None]
    if x.shape[-1] != kernels.shape[-2]:
        raise ShapeError(f"input channels {x.shape[-1]} do not match kernel input channels {kernels.shape[-2]}")
    layer = cls(kernels.shape[-1], kernels.shape[0], "linear")
    layer.params = {"kernel": kernels, "bias": np.asarray(bias, dtype=DTYPE)}
    y = layer.forward(x)
    return y[0] if single else y


# --------------------------------------------------------------------------
# pooling

class _MaxPoolND(Layer):
    nsp = None

    def __init__(self, pool_size=2):
        super().__init__()
        if pool_size != 2:
            raise ValueError(f"only pool size 2 is supported, got {pool_size}")
        self.pool_size = 2

    def output_shape(self, input_shape):
        if len(input_shape) != self.nsp + 1:
            raise ShapeError(f"{type(self).__name__} expects rank-{self.nsp + 1} samples, got {input_shape}")
        return tuple(math.ceil(d / 2) for d in input_shape[:-1]) + (input_shape[-1],)

    def _offsets(self):
        # window positions in row-major order; ties resolve to the first
        if self.nsp == 2:
            return [(slice(None), slice(i, None, 2), slice(j, None, 2)) for i in (0, 1) for j in (0, 1)]
        return [(slice(None), slice(i, None, 2)) for i in (0, 1)]

    def forward(self, x, training=False, rng=None):
        x = self._check_input(x)
        spatial = x.shape[1:-1]
        if any(d % 2 for d in spatial):
            pad = [(0, 0)] + [(0, d % 2) for d in spatial] + [(0, 0)]
            x = np.pad(x, pad, constant_values=-np.inf)
        parts = [x[o] for o in self._offsets()]
        y = parts[0].copy()
        for part in parts[1:]:
            np.maximum(y, part, out=y)
        # index of the first window element equal to the max
        idx = np.full(y.shape, len(parts) - 1, dtype=np.int8)
        for i in range(len(parts) - 2, -1, -1):
            idx[parts[i] == y] = i
        self._cache = (idx, spatial)
        return y

    def backward(self, dy):
        idx, spatial = self._pop_cache()
        padded = tuple(d + d % 2 for d in spatial)
        dx = np.zeros((dy.shape[0], *padded, dy.shape[-1]), dtype=DTYPE)
        for i, o in enumerate(self._offsets()):
            dx[o] = np.where(idx == i, dy, 0.0)
        if padded != spatial:
            crop = (slice(None),) + tuple(slice(0, d) for d in spatial)
            dx = np.ascontiguousarray(dx[crop])
        return dx

    def __repr__(self):
        return f"{type(self).__name__}(2)"


class MaxPool2D(_MaxPoolND):
    """Stride-2 max pooling over (H, W); trailing partial windows are kept."""

    kind = "maxpool2d"
    nsp = 2


class MaxPool1D(_MaxPoolND):
    kind = "maxpool1d"
    nsp = 1


def maxpool_forward(x, pool=2):
    """Ceil-mode 2x max pooling of one sample, (H, W, C) or (L, C)."""
    x = np.asarray(x, dtype=DTYPE)
    layer = MaxPool2D(pool) if x.ndim == 3 else MaxPool1D(pool)
    return layer.forward(x[None])[0]


# --------------------------------------------------------------------------
# dropout / flatten

class Dropout(Layer):
    """Inverted dropout: survivors scaled by 1/(1-rate) at train time, identity at inference."""

    kind = "dropout"

    def __init__(self, rate):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = float(rate)

    def output_shape(self, input_shape):
        return tuple(input_shape)

    def forward(self, x, training=False, rng=None):
        x = self._check_input(x)
        if not training or self.rate == 0.0:
            self._cache = (None,)
            return x
        if rng is None:
            raise ValueError("training-mode dropout needs a random generator")
        keep = make_rng(rng).random(x.shape) >= self.rate
        mask = keep / (1.0 - self.rate)
        self._cache = (mask,)
        return x * mask

    def backward(self, dy):
        (mask,) = self._pop_cache()
        return dy if mask is None else dy * mask

    def __repr__(self):
        return f"Dropout({self.rate})"


def dropout(x, rate, training, rng=None):
    """Functional inverted dropout on an arbitrary array."""
    x = np.asarray(x, dtype=DTYPE)
    return Dropout(rate).forward(x[None], training=training, rng=rng)[0]


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x, training=False, rng=None):
        x = self._check_input(x)
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._pop_cache())


# --------------------------------------------------------------------------
# dense

class Dense(Layer):
    """``activation(x @ W + b)`` with W of shape [inputs x units]."""

    kind = "dense"

    def __init__(self, units, activation="linear"):
        super().__init__()
        self.units = int(units)
        self.activation = _check_activation(activation)

    def output_shape(self, input_shape):
        if len(input_shape) != 1:
            raise ShapeError(f"Dense expects flat samples, got {input_shape}")
        return (self.units,)

    def build(self, input_shape, rng=None):
        out = super().build(input_shape)
        self.params = {
            "kernel": init_weights((input_shape[0], self.units), "glorot_uniform", rng),
            "bias": init_weights((self.units,), "zeros", rng),
        }
        return out

    def forward(self, x, training=False, rng=None):
        x = self._check_input(x)
        w, b = self.params["kernel"], self.params["bias"]
        if x.ndim != 2 or x.shape[1] != w.shape[0]:
            raise ShapeError(f"Dense input {x.shape[1:]} does not match weights {w.shape}")
        act, _ = ACTIVATIONS[self.activation]
        y = act(x @ w + b)
        self._cache = (x, y)
        return y

    def backward(self, dy):
        x, y = self._pop_cache()
        _, grad = ACTIVATIONS[self.activation]
        dz = grad(y, dy)
        self.grads = {"kernel": x.T @ dz, "bias": dz.sum(axis=0)}
        return dz @ self.params["kernel"].T

    def __repr__(self):
        return f"Dense({self.units}, activation={self.activation!r})"


def dense_forward(x, weights, bias, activation="linear"):
    """``activation(Wᵀx + b)`` for one input vector (or a batch of rows)."""
    x = np.asarray(x, dtype=DTYPE)
    single = x.ndim == 1
    layer = Dense(np.shape(weights)[1], activation)
    layer.params = {"kernel": np.asarray(weights, dtype=DTYPE), "bias": np.asarray(bias, dtype=DTYPE)}
    y = layer.forward(x[None] if single else x)
    return y[0] if single else y


# --------------------------------------------------------------------------
# LSTM

GATES = ("f", "k", "g", "o")
LSTM_PARAM_NAMES = tuple(f"{kind}{gate}" for gate in GATES for kind in ("w_x", "w_h", "b_"))


@dataclass
class LstmParams:
    """Per-gate weights: forget (f), input (k), modulation (g), output (o).

    ``w_x*`` are [hidden x input], ``w_h*`` are [hidden x hidden], ``b_*`` are [hidden].
    """

    w_xf: np.ndarray
    w_hf: np.ndarray
    b_f: np.ndarray
    w_xk: np.ndarray
    w_hk: np.ndarray
    b_k: np.ndarray
    w_xg: np.ndarray
    w_hg: np.ndarray
    b_g: np.ndarray
    w_xo: np.ndarray
    w_ho: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        hidden, inputs = np.shape(self.w_xf)
        for gate in GATES:
            wx, wh, b = (np.shape(getattr(self, f"{p}{gate}")) for p in ("w_x", "w_h", "b_"))
            if wx != (hidden, inputs) or wh != (hidden, hidden) or b != (hidden,):
                raise ShapeError(
                    f"gate {gate}: expected ({hidden},{inputs}), ({hidden},{hidden}), ({hidden},); "
                    f"got {wx}, {wh}, {b}"
                )

    @property
    def hidden(self):
        return self.w_xf.shape[0]

    @property
    def inputs(self):
        return self.w_xf.shape[1]

    def count(self):
        return sum(np.size(getattr(self, f.name)) for f in fields(self))

    def as_dict(self):
        return {name: getattr(self, name) for name in LSTM_PARAM_NAMES}

    @classmethod
    def init(cls, inputs, hidden, rng, scheme="glorot_uniform"):
        rng = make_rng(rng)
        d = {}
        for gate in GATES:
            d[f"w_x{gate}"] = init_weights((hidden, inputs), scheme, rng)
            d[f"w_h{gate}"] = init_weights((hidden, hidden), scheme, rng)
            d[f"b_{gate}"] = init_weights((hidden,), "zeros", rng)
        return cls(**d)

    @classmethod
    def zeros(cls, inputs, hidden):
        return cls.init(inputs, hidden, 0, scheme="zeros")


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray
    gates: dict = field(default=None, repr=False)

    @classmethod
    def zeros(cls, hidden):
        return cls(np.zeros(hidden, dtype=DTYPE), np.zeros(hidden, dtype=DTYPE))


def lstm_cell_step(x_t, prev, p):
    """One LSTM step. Works on a vector or on a batch of row vectors.

    f = σ(W_xf x + W_hf h + b_f), k = σ(...), g = tanh(...), o = σ(...),
    c = f ⊙ c_prev + k ⊙ g, h = o ⊙ tanh(c).
    """
    x_t = np.asarray(x_t, dtype=DTYPE)
    if x_t.shape[-1] != p.inputs:
        raise ShapeError(f"input size {x_t.shape[-1]} does not match LSTM input size {p.inputs}")
    if np.shape(prev.h)[-1] != p.hidden or np.shape(prev.c)[-1] != p.hidden:
        raise ShapeError(f"state size does not match LSTM hidden size {p.hidden}")

    def pre(gate):
        return (x_t @ getattr(p, f"w_x{gate}").T + prev.h @ getattr(p, f"w_h{gate}").T
                + getattr(p, f"b_{gate}"))

    f = sigmoid(pre("f"))
    k = sigmoid(pre("k"))
    g = np.tanh(pre("g"))
    o = sigmoid(pre("o"))
    c = f * prev.c + k * g
    h = o * np.tanh(c)
    return LstmState(h, c, gates={"f": f, "k": k, "g": g, "o": o})


def lstm_layer_forward(seq, p, init=None):
    """Fold :func:`lstm_cell_step` over a [T x input] sequence.

    Returns ``(h_T, trace)`` where ``trace`` holds the state after every step.
    The initial state defaults to zeros.
    """
    seq = np.asarray(seq, dtype=DTYPE)
    if seq.ndim < 2 or seq.shape[-2] < 1:
        raise ValueError("LSTM needs a sequence of at least one step")
    state = init if init is not None else LstmState.zeros(p.hidden)
    trace = []
    for t in range(seq.shape[-2]):
        state = lstm_cell_step(seq[..., t, :], state, p)
        trace.append(state)
    return state.h, trace


class LSTM(Layer):
    """Single LSTM layer over (T, input) samples returning the last hidden state."""

    kind = "lstm"

    def __init__(self, units):
        super().__init__()
        self.units = int(units)

    def output_shape(self, input_shape):
        if len(input_shape) != 2:
            raise ShapeError(f"LSTM expects (T, input) samples, got {input_shape}")
        return (self.units,)

    def build(self, input_shape, rng=None):
        out = super().build(input_shape)
        self.params = LstmParams.init(input_shape[1], self.units, make_rng(rng)).as_dict()
        return out

    @property
    def lstm_params(self):
        return LstmParams(**self.params)

    def _stacked(self):
        p = self.params
        wx = np.concatenate([p[f"w_x{g}"] for g in GATES], axis=0)
        wh = np.concatenate([p[f"w_h{g}"] for g in GATES], axis=0)
        b = np.concatenate([p[f"b_{g}"] for g in GATES])
        return wx, wh, b

    def forward(self, x, training=False, rng=None):
        x = self._check_input(x)
        n, steps, _ = x.shape
        hid = self.units
        wx, wh, b = self._stacked()
        ax = x @ wx.T + b  # (N, T, 4H)
        h = np.zeros((n, hid), dtype=DTYPE)
        c = np.zeros((n, hid), dtype=DTYPE)
        acts = np.empty((steps, n, 4 * hid), dtype=DTYPE)
        cs = np.empty((steps + 1, n, hid), dtype=DTYPE)
        hs = np.empty((steps + 1, n, hid), dtype=DTYPE)
        tcs = np.empty((steps, n, hid), dtype=DTYPE)
        cs[0], hs[0] = c, h
        for t in range(steps):
            a = ax[:, t, :] + h @ wh.T
            f = sigmoid(a[:, :hid])
            k = sigmoid(a[:, hid:2 * hid])
            g = np.tanh(a[:, 2 * hid:3 * hid])
            o = sigmoid(a[:, 3 * hid:])
            c = f * c + k * g
            tc = np.tanh(c)
            h = o * tc
            acts[t, :, :hid], acts[t, :, hid:2 * hid] = f, k
            acts[t, :, 2 * hid:3 * hid], acts[t, :, 3 * hid:] = g, o
            cs[t + 1], hs[t + 1], tcs[t] = c, h, tc
        self._cache = (x, acts, cs, hs, tcs)
        return h

    def backward(self, dy):
        x, acts, cs, hs, tcs = self._pop_cache()
        wx, wh, _ = self._stacked()
        hid = self.units
        steps, n = acts.shape[0], acts.shape[1]
        da = np.empty((n, steps, 4 * hid), dtype=DTYPE)
        dh = np.array(dy, dtype=DTYPE)
        dc = np.zeros((n, hid), dtype=DTYPE)
        dwh = np.zeros_like(wh)
        for t in reversed(range(steps)):
            f, k = acts[t, :, :hid], acts[t, :, hid:2 * hid]
            g, o = acts[t, :, 2 * hid:3 * hid], acts[t, :, 3 * hid:]
            tc = tcs[t]
            dc = dc + dh * o * (1.0 - tc * tc)
            dat = da[:, t, :]
            dat[:, :hid] = dc * cs[t] * f * (1.0 - f)
            dat[:, hid:2 * hid] = dc * g * k * (1.0 - k)
            dat[:, 2 * hid:3 * hid] = dc * k * (1.0 - g * g)
            dat[:, 3 * hid:] = dh * tc * o * (1.0 - o)
            dwh += dat.T @ hs[t]
            dh = dat @ wh
            dc = dc * f
        flat = da.reshape(-1, 4 * hid)
        dwx = flat.T @ x.reshape(-1, x.shape[-1])
        db = flat.sum(axis=0)
        self.grads = {}
        for i, gate in enumerate(GATES):
            rows = slice(i * hid, (i + 1) * hid)
            self.grads[f"w_x{gate}"] = dwx[rows]
            self.grads[f"w_h{gate}"] = dwh[rows]
            self.grads[f"b_{gate}"] = db[rows]
        return da @ wx

    def __repr__(self):
        return f"LSTM({self.units})"


# --------------------------------------------------------------------------
# time distributed wrapper

class TimeDistributed(Layer):
    """Apply ``inner`` with shared parameters to each slice along the time axis."""

    kind = "time_distributed"

    def __init__(self, inner):
        super().__init__()
        self.inner = inner

    def output_shape(self, input_shape):
        return (input_shape[0], *self.inner.output_shape(tuple(input_shape[1:])))

    def build(self, input_shape, rng=None):
        out = super().build(input_shape)
        self.inner.build(tuple(input_shape[1:]), rng)
        return out

    @property
    def params(self):
        return self.inner.params

    @params.setter
    def params(self, value):
        if hasattr(self, "inner"):
            self.inner.params = value

    @property
    def grads(self):
        return self.inner.grads

    @grads.setter
    def grads(self, value):
        if hasattr(self, "inner"):
            self.inner.grads = value

    def forward(self, x, training=False, rng=None):
        x = self._check_input(x)
        n, steps = x.shape[:2]
        y = self.inner.forward(x.reshape(n * steps, *x.shape[2:]), training=training, rng=rng)
        self._cache = (n, steps)
        return y.reshape(n, steps, *y.shape[1:])

    def backward(self, dy):
        n, steps = self._pop_cache()
        dx = self.inner.backward(dy.reshape(n * steps, *dy.shape[2:]))
        return dx.reshape(n, steps, *dx.shape[1:])

    def __repr__(self):
        return f"TimeDistributed({self.inner!r})"


def time_distributed(inner, x, training=False, rng=None):
    """Apply a built ``inner`` layer to every timestep of one (T, ...) sample."""
    x = np.asarray(x, dtype=DTYPE)
    wrapper = TimeDistributed(inner)
    return wrapper.forward(x[None], training=training, rng=rng)[0]


def layer_from_spec(spec, input_shape, rng):
    """Instantiate and build a layer; returns ``(layer, output_shape)``."""
    layer = make_layer(spec)
    out = layer.build(tuple(input_shape), rng)
    return layer, out


def spec_of(layer):
    """Inverse of :func:`make_layer`."""
    k = layer.kind
    if k in ("conv2d", "conv1d"):
        return LayerSpec(k, filters=layer.filters, kernel_size=layer.kernel_size, activation=layer.activation)
    if k in ("maxpool2d", "maxpool1d"):
        return LayerSpec(k, pool_size=layer.pool_size)
    if k == "dropout":
        return LayerSpec(k, rate=layer.rate)
    if k == "flatten":
        return LayerSpec(k)
    if k == "dense":
        return LayerSpec(k, units=layer.units, activation=layer.activation)
    if k == "lstm":
        return LayerSpec(k, units=layer.units)
    return LayerSpec(k, inner=spec_of(layer.inner))

