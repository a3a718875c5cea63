import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pavedl.gradcheck import grad_check
from pavedl.layers import (
    LSTM,
    BackwardError,
    Conv1D,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    LayerSpec,
    LstmParams,
    LstmState,
    MaxPool1D,
    MaxPool2D,
    TimeDistributed,
    conv1d_forward,
    conv2d_forward,
    dense_forward,
    dropout,
    layer_from_spec,
    lstm_cell_step,
    lstm_layer_forward,
    make_layer,
    maxpool_forward,
    spec_of,
    time_distributed,
)
from pavedl.tensor import ShapeError


def sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def random_params(r, inputs, hidden, scale=1.0):
    p = LstmParams.init(inputs, hidden, r)
    return LstmParams(**{k: r.standard_normal(v.shape) * scale for k, v in p.as_dict().items()})


# -------------------------------------------------------------- LSTM

def test_lstm_zero_params():
    p = LstmParams.zeros(3, 4)
    s = lstm_cell_step(np.array([0.3, -2.0, 5.0]), LstmState.zeros(4), p)
    for gate in ("f", "k", "o"):
        assert np.all(s.gates[gate] == 0.5)
    assert np.all(s.gates["g"] == 0.0)
    assert np.all(s.c == 0.0) and np.all(s.h == 0.0)


def test_lstm_scalar_transcription():
    w = dict(w_xf=0.5, w_hf=-0.3, b_f=0.1, w_xk=-0.7, w_hk=0.2, b_k=0.05,
             w_xg=1.3, w_hg=0.4, b_g=-0.2, w_xo=0.9, w_ho=-1.1, b_o=0.3)
    p = LstmParams(**{k: np.array([[v]]) if k.startswith("w") else np.array([v]) for k, v in w.items()})
    x, h0, c0 = 0.8, -0.25, 0.6
    f = sig(w["w_xf"] * x + w["w_hf"] * h0 + w["b_f"])
    k = sig(w["w_xk"] * x + w["w_hk"] * h0 + w["b_k"])
    g = math.tanh(w["w_xg"] * x + w["w_hg"] * h0 + w["b_g"])
    c = f * c0 + k * g
    o = sig(w["w_xo"] * x + w["w_ho"] * h0 + w["b_o"])
    h = o * math.tanh(c)
    s = lstm_cell_step(np.array([x]), LstmState(np.array([h0]), np.array([c0])), p)
    assert abs(s.c[0] - c) < 1e-12
    assert abs(s.h[0] - h) < 1e-12


def test_lstm_param_count_table():
    assert LstmParams.zeros(42, 50).count() == 18600
    assert LstmParams.zeros(672, 50).count() == 144600


def test_lstm_params_shape_validation():
    d = LstmParams.zeros(3, 2).as_dict()
    d["w_hk"] = np.zeros((2, 3))
    with pytest.raises(ShapeError):
        LstmParams(**d)


def test_lstm_cell_dimension_mismatch():
    with pytest.raises(ShapeError):
        lstm_cell_step(np.zeros(5), LstmState.zeros(4), LstmParams.zeros(3, 4))
    with pytest.raises(ShapeError):
        lstm_cell_step(np.zeros(3), LstmState.zeros(2), LstmParams.zeros(3, 4))


def test_lstm_fold_base_case(rng):
    p = random_params(rng, 3, 4)
    x = rng.standard_normal((1, 3))
    h, trace = lstm_layer_forward(x, p)
    assert np.array_equal(h, lstm_cell_step(x[0], LstmState.zeros(4), p).h)
    assert len(trace) == 1


def test_lstm_layer_output_shape_and_zero_params(rng):
    p = LstmParams.init(42, 50, rng)
    h, trace = lstm_layer_forward(rng.standard_normal((18, 42)), p)
    assert h.shape == (50,) and len(trace) == 18
    h0, _ = lstm_layer_forward(rng.standard_normal((18, 42)), LstmParams.zeros(42, 50))
    assert np.all(h0 == 0.0)


def test_lstm_empty_sequence():
    with pytest.raises(ValueError):
        lstm_layer_forward(np.zeros((0, 3)), LstmParams.zeros(3, 2))


def test_lstm_layer_matches_fold(rng):
    layer = LSTM(4)
    layer.build((5, 3), rng)
    x = rng.standard_normal((2, 5, 3))
    y = layer.forward(x)
    for i in range(2):
        h, _ = lstm_layer_forward(x[i], layer.lstm_params)
        np.testing.assert_allclose(y[i], h, rtol=0, atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.floats(0.1, 10), st.integers(0, 2**32 - 1))
def test_lstm_gate_ranges(inputs, hidden, scale, seed):
    r = np.random.default_rng(seed)
    p = random_params(r, inputs, hidden, scale)
    prev = LstmState(np.tanh(r.standard_normal(hidden)), r.standard_normal(hidden) * scale)
    s = lstm_cell_step(r.standard_normal(inputs) * scale, prev, p)
    for gate in ("f", "k", "o"):
        assert np.all((s.gates[gate] >= 0) & (s.gates[gate] <= 1))
    assert np.all(np.abs(s.gates["g"]) <= 1)
    assert np.all(np.abs(s.h) <= 1)


def test_lstm_cell_linearity_without_input_gate(rng):
    p = random_params(rng, 3, 4)
    p.b_k[:] = -1e4  # k = 0 exactly in float64
    prev = LstmState(np.tanh(rng.standard_normal(4)), rng.standard_normal(4))
    s = lstm_cell_step(rng.standard_normal(3), prev, p)
    assert np.all(s.gates["k"] == 0.0)
    assert np.array_equal(s.c, s.gates["f"] * prev.c)


# -------------------------------------------------------------- convolution

def loop_conv2d(x, w, b):
    h, wd, c = x.shape
    k = w.shape[0]
    r = k // 2
    out = np.zeros((h, wd, w.shape[-1]))
    for i in range(h):
        for j in range(wd):
            for f in range(w.shape[-1]):
                s = b[f]
                for di in range(k):
                    for dj in range(k):
                        ii, jj = i + di - r, j + dj - r
                        if 0 <= ii < h and 0 <= jj < wd:
                            s += np.dot(x[ii, jj], w[di, dj, :, f])
                out[i, j, f] = s
    return out


def loop_conv1d(x, w, b):
    n, c = x.shape
    k = w.shape[0]
    r = k // 2
    out = np.zeros((n, w.shape[-1]))
    for i in range(n):
        for f in range(w.shape[-1]):
            s = b[f]
            for d in range(k):
                if 0 <= i + d - r < n:
                    s += np.dot(x[i + d - r], w[d, :, f])
            out[i, f] = s
    return out


def test_conv2d_table_shape_and_params(rng):
    layer, out = layer_from_spec(LayerSpec("conv2d", filters=32, kernel_size=3, activation="relu"),
                                 (18, 42, 1), rng)
    assert out == (18, 42, 32)
    assert layer.count_params() == 320


def test_conv2d_delta_kernel_is_identity(rng):
    x = rng.standard_normal((5, 7, 2))
    w = np.zeros((3, 3, 2, 2))
    w[1, 1, 0, 0] = w[1, 1, 1, 1] = 1.0
    np.testing.assert_array_equal(conv2d_forward(x, w, np.zeros(2)), x)


def test_conv2d_all_ones_kernel_oracle(rng):
    x = rng.standard_normal((4, 4, 1))
    w = np.ones((3, 3, 1, 1))
    np.testing.assert_allclose(conv2d_forward(x, w, np.zeros(1)), loop_conv2d(x, w, np.zeros(1)),
                               rtol=0, atol=1e-12)


def test_conv2d_random_oracle(rng):
    x = rng.standard_normal((5, 6, 3))
    w = rng.standard_normal((3, 3, 3, 4))
    b = rng.standard_normal(4)
    np.testing.assert_allclose(conv2d_forward(x, w, b), loop_conv2d(x, w, b), rtol=0, atol=1e-12)


def test_conv2d_channel_mismatch():
    with pytest.raises(ShapeError):
        conv2d_forward(np.zeros((4, 4, 2)), np.zeros((3, 3, 1, 1)), np.zeros(1))


def test_conv1d_table_shape_and_params(rng):
    layer, out = layer_from_spec(LayerSpec("conv1d", filters=32, kernel_size=3, activation="relu"),
                                 (42, 1), rng)
    assert out == (42, 32)
    assert layer.count_params() == 128


def test_conv1d_delta_and_oracle(rng):
    x = rng.standard_normal((9, 2))
    w = np.zeros((3, 2, 2))
    w[1, 0, 0] = w[1, 1, 1] = 1.0
    np.testing.assert_array_equal(conv1d_forward(x, w, np.zeros(2)), x)
    w = rng.standard_normal((3, 2, 3))
    b = rng.standard_normal(3)
    np.testing.assert_allclose(conv1d_forward(x, w, b), loop_conv1d(x, w, b), rtol=0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([1, 3, 5, 7]), st.integers(1, 9), st.integers(1, 9), st.integers(0, 1000))
def test_same_padding_preserves_spatial_dims(k, h, w, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((h, w, 2))
    kern = r.standard_normal((k, k, 2, 3))
    y = conv2d_forward(x, kern, np.zeros(3))
    assert y.shape == (h, w, 3)
    np.testing.assert_allclose(y, loop_conv2d(x, kern, np.zeros(3)), atol=1e-11)


def test_even_kernel_rejected():
    with pytest.raises(ValueError):
        Conv2D(4, kernel_size=2)


# -------------------------------------------------------------- pooling

def test_maxpool_table_shapes(rng):
    assert maxpool_forward(rng.standard_normal((18, 42, 3))).shape == (9, 21, 3)
    assert maxpool_forward(rng.standard_normal((9, 21, 3))).shape == (5, 11, 3)
    assert maxpool_forward(rng.standard_normal((42, 32))).shape == (21, 32)


def test_maxpool_constant_input():
    y = maxpool_forward(np.full((5, 7, 2), 3.5))
    assert y.shape == (3, 4, 2) and np.all(y == 3.5)


def test_maxpool_partial_window_kept():
    x = np.arange(9.0).reshape(3, 3, 1)
    y = maxpool_forward(x)[..., 0]
    assert np.array_equal(y, [[4.0, 5.0], [7.0, 8.0]])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 10_000))
def test_maxpool_values_come_from_their_window(h, w, seed):
    x = np.random.default_rng(seed).standard_normal((h, w, 2))
    y = maxpool_forward(x)
    assert y.shape == (math.ceil(h / 2), math.ceil(w / 2), 2)
    for i in range(y.shape[0]):
        for j in range(y.shape[1]):
            window = x[2 * i:2 * i + 2, 2 * j:2 * j + 2]
            assert np.array_equal(y[i, j], window.max(axis=(0, 1)))
    assert y.max() <= x.max()


def test_maxpool_backward_routes_to_first_max():
    layer = MaxPool1D()
    layer.build((4, 1))
    layer.forward(np.array([[[2.0], [2.0], [1.0], [3.0]]]))
    dx = layer.backward(np.array([[[10.0], [20.0]]]))
    assert np.array_equal(dx[0, :, 0], [10.0, 0.0, 0.0, 20.0])


def test_pool_size_other_than_two_rejected():
    with pytest.raises(ValueError):
        MaxPool2D(3)


# -------------------------------------------------------------- dropout

def test_dropout_inference_identity(rng):
    x = rng.standard_normal((4, 5))
    assert np.array_equal(dropout(x, 0.4, training=False), x)


def test_dropout_rate_zero_identity(rng):
    x = rng.standard_normal(10)
    assert np.array_equal(dropout(x, 0.0, training=True, rng=1), x)
    assert np.array_equal(dropout(x, 0.0, training=False), x)


def test_dropout_inverted_scaling_mean():
    y = dropout(np.ones(10**6), 0.25, training=True, rng=3)
    assert abs(y.mean() - 1.0) < 0.01
    assert set(np.unique(y)) <= {0.0, 1.0 / 0.75}


def test_dropout_mask_reproducible(rng):
    x = rng.standard_normal(100)
    assert np.array_equal(dropout(x, 0.5, True, rng=8), dropout(x, 0.5, True, rng=8))


def test_dropout_rate_contract():
    with pytest.raises(ValueError):
        Dropout(1.0)
    with pytest.raises(ValueError):
        LayerSpec("dropout", rate=1.5)
    with pytest.raises(ValueError):
        Dropout(0.3).forward(np.ones((1, 2)), training=True)


# -------------------------------------------------------------- dense

def test_dense_table_counts(rng):
    layer, _ = layer_from_spec(LayerSpec("dense", units=128, activation="relu"), (2304,), rng)
    assert layer.count_params() == 295040
    layer, _ = layer_from_spec(LayerSpec("dense", units=4, activation="softmax"), (50,), rng)
    assert layer.count_params() == 204
    layer, _ = layer_from_spec(LayerSpec("dense", units=1, activation="sigmoid"), (128,), rng)
    assert layer.count_params() == 129


def test_dense_forward_definition(rng):
    x = rng.standard_normal(5)
    w = rng.standard_normal((5, 3))
    b = rng.standard_normal(3)
    np.testing.assert_allclose(dense_forward(x, w, b), w.T @ x + b, atol=1e-14)


def test_dense_softmax_normalized(rng):
    p = dense_forward(rng.standard_normal((20, 7)), rng.standard_normal((7, 4)) * 5, np.zeros(4), "softmax")
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_dense_shape_mismatch():
    with pytest.raises(ShapeError):
        dense_forward(np.zeros(4), np.zeros((5, 3)), np.zeros(3))


def test_dense_backward_hand_algebra():
    layer = Dense(2)
    layer.build((2,))
    layer.params["kernel"][...] = [[1.0, 2.0], [3.0, 4.0]]
    layer.params["bias"][...] = [0.5, -0.5]
    x = np.array([[1.0, -1.0]])
    layer.forward(x)
    dx = layer.backward(np.array([[2.0, 3.0]]))
    # dL/dW[i, j] = x_i * g_j; dL/db = g; dL/dx = W g
    assert np.array_equal(layer.grads["kernel"], [[2.0, 3.0], [-2.0, -3.0]])
    assert np.array_equal(layer.grads["bias"], [2.0, 3.0])
    assert np.array_equal(dx, [[8.0, 18.0]])


# -------------------------------------------------------------- TimeDistributed / flatten

def test_time_distributed_conv1d_shape(rng):
    layer, out = layer_from_spec(
        LayerSpec("time_distributed", inner=LayerSpec("conv1d", filters=32, kernel_size=3, activation="relu")),
        (18, 42, 1), rng)
    assert out == (18, 42, 32)
    assert layer.count_params() == 128


def test_time_distributed_identity_inner(rng):
    inner = Dropout(0.5)
    inner.build((4,))
    x = rng.standard_normal((6, 4))
    assert np.array_equal(time_distributed(inner, x), x)


def test_time_distributed_single_step_equals_inner(rng):
    inner = Conv1D(3, 3)
    inner.build((7, 2), rng)
    x = rng.standard_normal((1, 7, 2))
    assert np.array_equal(time_distributed(inner, x)[0], inner.forward(x)[0])


def test_time_distributed_shares_parameters(rng):
    inner = Dense(3, "tanh")
    inner.build((4,), rng)
    x = rng.standard_normal((5, 4))
    y = time_distributed(inner, x)
    for t in range(5):
        np.testing.assert_allclose(y[t], inner.forward(x[t:t + 1])[0], rtol=0, atol=1e-14)


def test_flatten_round_trip(rng):
    layer = Flatten()
    layer.build((3, 6, 128))
    x = rng.standard_normal((2, 3, 6, 128))
    y = layer.forward(x)
    assert y.shape == (2, 2304)
    assert np.array_equal(layer.backward(y), x)


# -------------------------------------------------------------- backward contracts and grad checks

ALL_SPECS = {
    "conv2d": (LayerSpec("conv2d", filters=3, kernel_size=3, activation="relu"), (6, 6, 2)),
    "conv1d": (LayerSpec("conv1d", filters=3, kernel_size=3, activation="relu"), (7, 2)),
    "maxpool2d": (LayerSpec("maxpool2d", pool_size=2), (5, 6, 2)),
    "maxpool1d": (LayerSpec("maxpool1d", pool_size=2), (7, 3)),
    "dropout": (LayerSpec("dropout", rate=0.3), (4, 3)),
    "flatten": (LayerSpec("flatten"), (3, 2, 2)),
    "dense": (LayerSpec("dense", units=3, activation="linear"), (5,)),
    "dense_sigmoid": (LayerSpec("dense", units=1, activation="sigmoid"), (5,)),
    "dense_softmax": (LayerSpec("dense", units=4, activation="softmax"), (5,)),
    "dense_tanh": (LayerSpec("dense", units=3, activation="tanh"), (5,)),
    "lstm": (LayerSpec("lstm", units=4), (5, 3)),
    "time_distributed": (LayerSpec("time_distributed",
                                   inner=LayerSpec("conv1d", filters=2, kernel_size=3, activation="relu")),
                         (3, 5, 1)),
}


@pytest.mark.parametrize("name", sorted(ALL_SPECS))
def test_backward_without_forward(name):
    spec, shape = ALL_SPECS[name]
    layer = make_layer(spec)
    layer.build(shape, 0)
    with pytest.raises(BackwardError):
        layer.backward(np.zeros((1, *layer.output_shape(shape))))


@pytest.mark.parametrize("name", sorted(ALL_SPECS))
def test_zero_upstream_gives_zero_gradients(name, rng):
    spec, shape = ALL_SPECS[name]
    layer = make_layer(spec)
    out = layer.build(shape, rng)
    layer.forward(rng.standard_normal((2, *shape)), training=True, rng=1)
    dx = layer.backward(np.zeros((2, *out)))
    assert np.all(dx == 0)
    for g in layer.grads.values():
        assert np.all(g == 0)


@pytest.mark.parametrize("name", sorted(ALL_SPECS))
@pytest.mark.parametrize("training", [False, True])
def test_grad_check_every_layer(name, training):
    spec, shape = ALL_SPECS[name]
    report = grad_check(make_layer(spec), shape, rng=3, training=training)
    assert report.passed, str(report)


def test_grad_check_named_examples():
    assert grad_check(Dense(3), (5,), rng=1).passed
    assert grad_check(LSTM(4), (5, 3), rng=1).passed
    assert grad_check(Conv2D(3, 3), (6, 6, 2), rng=1).passed


def test_grad_check_detects_a_wrong_gradient():
    class Broken(Dense):
        def backward(self, dy):
            dx = super().backward(dy)
            self.grads["kernel"] = self.grads["kernel"] * 1.01
            return dx

    assert not grad_check(Broken(3), (4,), rng=0).passed


@pytest.mark.parametrize("name", sorted(ALL_SPECS))
def test_layer_spec_round_trip(name):
    spec, shape = ALL_SPECS[name]
    assert spec_of(make_layer(spec)) == spec
    assert LayerSpec.from_dict(spec.to_dict()) == spec


def test_layer_spec_hyperparameters_exact():
    with pytest.raises(ValueError):
        LayerSpec("dense", units=3)  # activation missing
    with pytest.raises(ValueError):
        LayerSpec("flatten", units=3)
    with pytest.raises(ValueError):
        LayerSpec("conv3d")
    with pytest.raises(ValueError):
        LayerSpec("dense", units=3, activation="swish")


def test_tdist_wrapper_params_proxy(rng):
    td = TimeDistributed(Conv1D(2, 3))
    td.build((3, 5, 1), rng)
    assert td.params is td.inner.params
