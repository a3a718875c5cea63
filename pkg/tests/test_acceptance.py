"""Acceptance criteria 1-9, one test each; every test prints a PASS/FAIL line."""

import itertools
import math
import time

import numpy as np
import pytest

from pavedl.architectures import Model, build_cnn, build_cnn_lstm, build_lstm, cnn_lstm_spec, cnn_spec, lstm_spec
from pavedl.cli import main
from pavedl.gradcheck import grad_check, model_grad_check
from pavedl.layers import LayerSpec, LstmParams, LstmState, lstm_cell_step, make_layer
from pavedl.pms.csvio import load_directory, write_directory
from pavedl.pms.encoding import encode_dataset, fit_normalizer, prepare_dataset, split
from pavedl.pms.synthetic import generate_synthetic, with_constant_target
from pavedl.serialization import ModelContainer
from pavedl.training import (
    TrainingConfig,
    accuracy,
    evaluate,
    majority_baseline,
    r2_score,
    seed_streams,
    train,
)

N_SECTIONS = 5000
DATA_SEED = 1
RUN_SEED = 0


@pytest.fixture
def report(capsys):
    def emit(n, title, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'} - {title}: {detail}")
        assert ok, detail

    return emit


@pytest.fixture(scope="module")
def desk_sections():
    return generate_synthetic(N_SECTIONS, DATA_SEED)


def desk_dataset(sections, name):
    """Same split / normalizer derivation as ``pavedl train --seed RUN_SEED``."""
    streams = seed_streams(RUN_SEED)
    mask = split(len(sections), 0.2, streams["split"])
    normalizer = fit_normalizer([s for s, t in zip(sections, mask) if not t])
    return encode_dataset(sections, name, normalizer, mask), streams["init"]


# -------------------------------------------------------------- 1

TABLES = {
    "cnn": [((18, 42, 32), 320), ((9, 21, 32), 0), ((9, 21, 32), 0), ((9, 21, 64), 18496),
            ((5, 11, 64), 0), ((5, 11, 64), 0), ((5, 11, 128), 73856), ((3, 6, 128), 0),
            ((3, 6, 128), 0), ((2304,), 0), ((128,), 295040), ((128,), 0)],
    "lstm": [((50,), 18600)],
    "cnn_lstm": [((18, 42, 32), 128), ((18, 21, 32), 0), ((18, 672), 0), ((50,), 144600)],
}
HEAD_ROWS = {
    "regression_1": {"cnn": ((1,), 129), "lstm": ((1,), 51), "cnn_lstm": ((1,), 51)},
    "classification_4": {"cnn": ((4,), 516), "lstm": ((4,), 204), "cnn_lstm": ((4,), 204)},
}


def test_1_architecture_fidelity(report):
    start = time.perf_counter()
    bad = []
    for name, builder in (("cnn", build_cnn), ("lstm", build_lstm), ("cnn_lstm", build_cnn_lstm)):
        for head, rows in HEAD_ROWS.items():
            got = [(tuple(s), n) for _, s, n in builder(head).summary()]
            if got != TABLES[name] + [rows[name]]:
                bad.append(f"{name}/{head}: {got}")
    elapsed = time.perf_counter() - start
    report(1, "architecture fidelity", not bad and elapsed < 1.0,
           f"6 models, {len(bad)} mismatching tables, {elapsed:.2f}s")


# -------------------------------------------------------------- 2

def _sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def transcribe_step(x, h, c, p):
    """Gate equations written out element by element in plain Python."""
    hidden = len(h)
    out = {k: [0.0] * hidden for k in "fkgoch"}
    for i in range(hidden):
        pre = {}
        for gate in "fkgo":
            wx = getattr(p, f"w_x{gate}")
            wh = getattr(p, f"w_h{gate}")
            s = float(getattr(p, f"b_{gate}")[i])
            for j in range(len(x)):
                s += float(wx[i, j]) * float(x[j])
            for j in range(hidden):
                s += float(wh[i, j]) * float(h[j])
            pre[gate] = s
        f, k, o = _sig(pre["f"]), _sig(pre["k"]), _sig(pre["o"])
        g = math.tanh(pre["g"])
        cc = f * float(c[i]) + k * g
        for key, v in zip("fkgoch", (f, k, g, o, cc, o * math.tanh(cc))):
            out[key][i] = v
    return out


def test_2_lstm_correctness(report):
    start = time.perf_counter()
    r = np.random.default_rng(2024)
    worst = 0.0
    ranges_ok = True
    for _ in range(1000):
        n_in, n_h = int(r.integers(1, 6)), int(r.integers(1, 6))
        scale = float(r.uniform(0.1, 3.0))
        base = LstmParams.zeros(n_in, n_h).as_dict()
        p = LstmParams(**{k: r.standard_normal(v.shape) * scale for k, v in base.items()})
        x = r.standard_normal(n_in) * scale
        h0 = np.tanh(r.standard_normal(n_h))
        c0 = r.standard_normal(n_h) * scale
        s = lstm_cell_step(x, LstmState(h0, c0), p)
        ref = transcribe_step(x, h0, c0, p)
        got = {**s.gates, "c": s.c, "h": s.h}
        worst = max(worst, max(float(np.max(np.abs(got[k] - np.array(ref[k])))) for k in "fkgoch"))
        # closed intervals: float64 sigmoid/tanh saturate to exactly 0 / ±1
        ranges_ok &= all(np.all((s.gates[g] >= 0) & (s.gates[g] <= 1)) for g in "fko")
        ranges_ok &= bool(np.all(np.abs(s.gates["g"]) <= 1) and np.all(np.abs(s.h) <= 1))
    elapsed = time.perf_counter() - start
    report(2, "LSTM cell vs transcription", worst <= 1e-12 and ranges_ok and elapsed < 5.0,
           f"1000 instances, max abs diff {worst:.1e}, gate ranges {'ok' if ranges_ok else 'VIOLATED'}, "
           f"{elapsed:.2f}s")


# -------------------------------------------------------------- 3

LAYER_CASES = [
    (LayerSpec("conv2d", filters=3, kernel_size=3, activation="relu"), (6, 6, 2)),
    (LayerSpec("conv1d", filters=3, kernel_size=3, activation="relu"), (7, 2)),
    (LayerSpec("maxpool2d", pool_size=2), (5, 6, 2)),
    (LayerSpec("maxpool1d", pool_size=2), (7, 3)),
    (LayerSpec("dropout", rate=0.3), (4, 3)),
    (LayerSpec("flatten"), (3, 2, 2)),
    (LayerSpec("dense", units=3, activation="linear"), (5,)),
    (LayerSpec("dense", units=1, activation="sigmoid"), (5,)),
    (LayerSpec("dense", units=4, activation="softmax"), (5,)),
    (LayerSpec("lstm", units=4), (5, 3)),
    (LayerSpec("time_distributed", inner=LayerSpec("conv1d", filters=2, kernel_size=3, activation="relu")),
     (3, 5, 1)),
]
TINY_MODELS = {
    "cnn": cnn_spec("regression_1", input_shape=(6, 8, 1), filters=(2, 2, 2), dense_units=4),
    "lstm": lstm_spec("classification_4", input_shape=(5, 3), units=4),
    "cnn_lstm": cnn_lstm_spec("classification_4", input_shape=(4, 6, 1), filters=2, units=3),
}


def test_3_gradient_checks(report):
    start = time.perf_counter()
    worst = {}
    for i, (spec, shape) in enumerate(LAYER_CASES):
        for training in (False, True):
            rep = grad_check(make_layer(spec), shape, rng=100 + i, training=training)
            worst[spec.kind] = max(worst.get(spec.kind, 0.0), rep.max_error)
    r = np.random.default_rng(7)
    for name, spec in TINY_MODELS.items():
        m = Model(spec, rng=8)
        for pname, p in m.parameters().items():
            if pname.endswith("bias") or "/b_" in pname:
                p += r.uniform(0.05, 0.2, p.shape)  # keep ReLU inputs off the kink
        x = r.standard_normal((3, *spec.input_shape))
        y = r.random(3) if spec.head == "regression_1" else r.integers(0, 4, 3)
        worst[f"model:{name}"] = model_grad_check(m, x, y, None, rng=9, training=True).max_error
    elapsed = time.perf_counter() - start
    top = max(worst.values())
    report(3, "gradient checks", top < 1e-4 and elapsed < 60.0,
           f"{len(worst)} layer kinds / models, max relative error {top:.1e}, {elapsed:.1f}s")


# -------------------------------------------------------------- 4

def test_4_metric_fidelity(report):
    r = np.random.default_rng(4)
    checks = []
    for _ in range(200):
        y = r.standard_normal(int(r.integers(2, 50))) * 10 + 5
        checks.append(r2_score(y, y) == 1.0)
        checks.append(r2_score(y, np.full(len(y), y.mean())) == 0.0)
        k = -float(r.uniform(0.01, 3))
        checks.append(r2_score(y, y.mean() + k * (y - y.mean())) < 0)
    checks.append(abs(r2_score([1, 2, 3, 4], [1.1, 1.9, 3.2, 3.9]) - 0.986) < 1e-12)
    n_acc = 0
    for actual in itertools.product(range(1, 5), repeat=3):
        for pred in itertools.product(range(1, 5), repeat=3):
            expected = sum(a == b for a, b in zip(actual, pred)) / 3
            checks.append(accuracy(actual, pred) == expected)
            n_acc += 1
    report(4, "metric fidelity", all(checks),
           f"{len(checks) - n_acc} R² checks, {n_acc} enumerated accuracy cases, {checks.count(False)} failures")


# -------------------------------------------------------------- 5

@pytest.mark.slow
def test_5_desk_scale_cnn_iri(report, desk_sections):
    start = time.perf_counter()
    ds, init_rng = desk_dataset(desk_sections, "TX_IRI_AVERAGE_SCORE")
    model = build_cnn("regression_1", rng=init_rng)
    run = train(model, ds, TrainingConfig(epochs=100, seed=RUN_SEED))
    test_r2 = evaluate(model, ds.test).value
    elapsed = time.perf_counter() - start
    report(5, "CNN on IRI analog, 5000 sections, 100 epochs", test_r2 >= 0.70,
           f"test R² {test_r2:.4f} (floor 0.70), train R² {run.final['train']:.4f}, {elapsed / 60:.1f} min")


# -------------------------------------------------------------- 6

@pytest.mark.slow
def test_6_raveling_classification(report, desk_sections):
    start = time.perf_counter()
    ds, init_rng = desk_dataset(desk_sections, "TX_ACP_RAVELING_CODE")
    model = build_lstm("classification_4", rng=init_rng)
    train(model, ds, TrainingConfig(epochs=100, seed=RUN_SEED))
    acc = evaluate(model, ds.test).value
    baseline = majority_baseline(ds.train.y, ds.test.y)
    elapsed = time.perf_counter() - start
    report(6, "LSTM on raveling analog", acc > baseline and 0.40 <= acc <= 1.0,
           f"test accuracy {acc:.4f} vs majority baseline {baseline:.4f}, {elapsed / 60:.1f} min")


# -------------------------------------------------------------- 7

def test_7_negative_r2(report):
    sections = generate_synthetic(1000, 7)
    ds = prepare_dataset(sections, "TX_IRI_AVERAGE_SCORE", seed=0)
    model = build_lstm("regression_1", rng=0)
    train(model, ds, TrainingConfig(epochs=3))
    normal = evaluate(model, ds.test).value
    flat = with_constant_target(sections, "TX_IRI_AVERAGE_SCORE", 110.0, jitter=0.5, rng=1)
    flat_ds = encode_dataset(flat, "TX_IRI_AVERAGE_SCORE", ds.normalizer, ds.is_test)
    ev = evaluate(model, flat_ds.test)
    spread = float(np.std(ev.actual))
    report(7, "near-constant target gives large negative R²", ev.value < -10,
           f"R² {ev.value:.1f} on targets with sd {spread:.2f} (same model scores {normal:.3f} on real targets)")


# -------------------------------------------------------------- 8

def test_8_determinism(report, tmp_path):
    data = tmp_path / "data"
    assert main(["synth", "--sections", "150", "--seed", "8", "--out", str(data)]) == 0
    same = []
    for arch, name in (("cnn", "TX_IRI_AVERAGE_SCORE"), ("lstm", "TX_ACP_RAVELING_CODE"),
                       ("cnn_lstm", "TX_CONDITION_SCORE")):
        outs = []
        for k in range(2):
            out = tmp_path / f"{arch}{k}"
            assert main(["train", "--data", str(data), "--indicator", name, "--model", arch,
                         "--epochs", "2", "--seed", "5", "--out", str(out)]) == 0
            outs.append(out)
        for f in ("model.pdl", "history.csv"):
            same.append((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes())
    report(8, "train reruns are bitwise identical", all(same),
           f"{sum(same)}/{len(same)} model containers and history CSVs identical across reruns")


# -------------------------------------------------------------- 9

def test_9_round_trips(report, tmp_path, desk_sections):
    exact = []
    normalizer = fit_normalizer(desk_sections[:500])
    for builder in (build_cnn, build_lstm, build_cnn_lstm):
        for head in ("regression_1", "classification_4"):
            blob = ModelContainer(builder(head, rng=3), normalizer, {"note": "round trip"}).to_bytes()
            exact.append(ModelContainer.from_bytes(blob).to_bytes() == blob)
    sections = desk_sections[:1000]
    write_directory(sections, tmp_path)
    back = load_directory(tmp_path)
    csv_ok = len(back) == len(sections) and all(
        a.section_id == b.section_id and a.last_work == b.last_work
        and a.last_work_year == b.last_work_year and np.array_equal(a.values, b.values)
        for a, b in zip(back, sections))
    report(9, "round trips", all(exact) and csv_ok,
           f"{sum(exact)}/6 containers byte-exact; CSV ingest of {len(sections)} generated sections "
           f"{'reproduces every value' if csv_ok else 'DIFFERS'}")
