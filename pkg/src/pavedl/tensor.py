"""Dense float64 arrays and the handful of primitives the network stack needs.

Tensors are plain ``numpy.ndarray`` values of dtype float64, row-major
(C order). Randomness always comes from :func:`make_rng`, which pins the
bit generator to PCG64 so draws do not depend on numpy's default choice.
"""

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_tensor(x):
    """Return ``x`` as a C-contiguous float64 array (no copy when possible)."""
    return np.ascontiguousarray(x, dtype=DTYPE)


def make_rng(seed):
    """Seeded generator backed by PCG64.

    PCG64 output for a given seed is fixed by numpy's stream-compatibility
    policy and is identical across platforms.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed, n):
    """Derive ``n`` independent generators from one integer seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def matmul(a, b):
    """Matrix product of rank-2 tensors ``a`` [m x k] and ``b`` [k x n].

    Delegates to BLAS dgemm. For fixed shapes and thread count the blocking,
    and therefore the summation order, is fixed, so results are reproducible
    run to run.
    """
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def sigmoid(x):
    # split by sign so exp never overflows
    x = np.asarray(x, dtype=DTYPE)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x):
    return np.maximum(x, 0.0)


def tanh(x):
    return np.tanh(np.asarray(x, dtype=DTYPE))


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=DTYPE)
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def _binary(fn):
    def op(a, b):
        a = np.asarray(a, dtype=DTYPE)
        b = np.asarray(b, dtype=DTYPE)
        if a.shape != b.shape:
            raise ShapeError(f"operand shapes differ: {a.shape} vs {b.shape}")
        return fn(a, b)
    return op


add = _binary(np.add)
mul = _binary(np.multiply)

ELEMENTWISE = {
    "add": add,
    "mul": mul,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "relu": relu,
}


def elementwise(op, *args):
    """Apply a named pointwise op: add, mul, sigmoid, tanh or relu."""
    try:
        fn = ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}; expected one of {sorted(ELEMENTWISE)}")
    return fn(*args)


def fans(shape):
    """Keras-style fan computation.

    Dense ``[in, out]`` -> (in, out); conv kernels ``[*spatial, c_in, f]`` use the
    receptive field size as multiplier.
    """
    shape = tuple(shape)
    if len(shape) == 1:
        return shape[0], shape[0]
    if len(shape) == 2:
        return shape[0], shape[1]
    receptive = int(np.prod(shape[:-2]))
    return shape[-2] * receptive, shape[-1] * receptive


def init_weights(shape, scheme, rng):
    """Initialize a parameter tensor.

    ``glorot_uniform`` samples U(-L, L) with L = sqrt(6 / (fan_in + fan_out));
    ``zeros`` returns an all-zero tensor.
    """
    shape = tuple(int(s) for s in shape)
    if any(s <= 0 for s in shape):
        raise ShapeError(f"invalid shape {shape}")
    if scheme == "zeros":
        return np.zeros(shape, dtype=DTYPE)
    if scheme == "glorot_uniform":
        fan_in, fan_out = fans(shape)
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return make_rng(rng).uniform(-limit, limit, size=shape).astype(DTYPE)
    raise ValueError(f"unknown init scheme {scheme!r}")
