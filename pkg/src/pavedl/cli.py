"""``pavedl`` command line: synth, train, eval, plot, predict.

Every command writes into an output directory that ends up holding exactly one
``manifest.json`` (see README for its schema). Everything else a command
writes is a primary artifact and is byte-identical across reruns with the same
flags, seed and inputs; only the manifest records wall time and a timestamp.

Exit codes: 0 success, 2 usage, 3 validation / parse / format, 4 I/O,
5 numeric failure during training.
"""

import argparse
import csv
import datetime
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .architectures import ARCHITECTURES, build_model
from .pms.csvio import CONDITIONS_FILE, WORK_FILE, ParseError, ingest_csv, load_directory, write_directory
from .pms.encoding import TEST_FRACTION, encode_dataset, encode_section, fit_normalizer, split
from .pms.schema import INDICATOR_NAMES, INPUT_YEARS, TARGET_YEAR, ValidationError, indicator
from .pms.synthetic import load_config, simulate
from .serialization import FormatError, load_model, save_model
from .training import TrainingConfig, TrainingError, evaluate, seed_streams, train

log = logging.getLogger("pavedl")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_IO = 4
EXIT_NUMERIC = 5

LOG_ENV = "PAVEDL_LOG_LEVEL"
MANIFEST = "manifest.json"
MODEL_FILE = "model.pdl"
# run-config keys that are not TrainingConfig fields
DATA_KEYS = ("test_fraction", "cap_percentile")


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# small I/O helpers

def _dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(_dump_json(obj))


def _read_json(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}")


def _fmt(v):
    return "" if v is None else repr(float(v))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _opt_float(text):
    return None if text == "" else float(text)


def _write_manifest(out, args, command, seed, inputs, outputs, started):
    manifest = {
        "command": command,
        "argv": list(args.argv),
        "config_file": getattr(args, "config", None),
        "seed": seed,
        "inputs": inputs,
        "outputs": sorted(outputs),
        "tool_version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "wall_time": round(time.perf_counter() - started, 3),
    }
    _write_json(os.path.join(out, MANIFEST), manifest)


def _predictions_rows(ev, classification):
    rows = []
    for i, sid in enumerate(ev.section_ids):
        row = [sid, _fmt(ev.actual[i]), _fmt(ev.predicted[i])]
        if classification:
            row += [_fmt(p) for p in ev.probabilities[i]]
        rows.append(row)
    header = ["section_id", "actual", "predicted"]
    if classification:
        header += [f"p_level_{k}" for k in range(1, 5)]
    return header, rows


def _split_mask(n, meta):
    return split(n, meta["test_fraction"], seed_streams(meta["seed"])["split"])


# --------------------------------------------------------------------------
# commands

def cmd_synth(args):
    started = time.perf_counter()
    config = load_config(args.config)
    data = simulate(args.sections, args.seed, config)
    os.makedirs(args.out, exist_ok=True)
    write_directory(data.sections, args.out)
    _write_json(os.path.join(args.out, "generator_config.json"), config)
    outputs = [CONDITIONS_FILE, WORK_FILE, "generator_config.json"]
    _write_manifest(args.out, args, "synth", args.seed, {"sections": args.sections}, outputs, started)
    log.info("wrote %d sections to %s", args.sections, args.out)
    return EXIT_OK


def _run_config(args):
    cfg = _read_json(args.config) if args.config else {}
    if not isinstance(cfg, dict):
        raise ValidationError(f"{args.config}: config must be a JSON object")
    data_opts = {k: cfg.pop(k) for k in DATA_KEYS if k in cfg}
    if args.epochs is not None:
        cfg["epochs"] = args.epochs
    if args.seed is not None:
        cfg["seed"] = args.seed
    return TrainingConfig.from_dict(cfg), data_opts


def cmd_train(args):
    started = time.perf_counter()
    config, data_opts = _run_config(args)
    test_fraction = data_opts.get("test_fraction", TEST_FRACTION)
    sections = load_directory(args.data)
    if not sections:
        raise ValidationError(f"{args.data}: no complete sections to train on")
    streams = seed_streams(config.seed)
    mask = split(len(sections), test_fraction, streams["split"])
    normalizer = fit_normalizer([s for s, t in zip(sections, mask) if not t],
                                data_opts.get("cap_percentile", 99.5))
    dataset = encode_dataset(sections, args.indicator, normalizer, mask)
    head = "classification_4" if dataset.task == "classification" else "regression_1"
    model = build_model(args.model, head, streams["init"])
    log.info("training %s on %s: %d train / %d test sections", args.model, dataset.indicator,
             int((~mask).sum()), int(mask.sum()))
    run = train(model, dataset, config)

    split_meta = {"seed": config.seed, "test_fraction": test_fraction, "n_sections": len(sections)}
    os.makedirs(args.out, exist_ok=True)
    save_model(os.path.join(args.out, MODEL_FILE), model, normalizer, {
        "indicator": dataset.indicator,
        "architecture": args.model,
        "split": split_meta,
        "training": config.to_dict(),
        "tool_version": __version__,
    })
    summary = run.to_dict()
    summary.pop("wall_time")
    summary.update({"indicator": dataset.indicator, "architecture": args.model,
                    "data": args.data, "split": split_meta})
    _write_json(os.path.join(args.out, "run.json"), summary)
    _write_csv(os.path.join(args.out, "history.csv"),
               ("epoch", "train_metric", "test_metric", "train_loss"),
               [(r.epoch, _fmt(r.train_metric), _fmt(r.test_metric), _fmt(r.train_loss))
                for r in run.history])
    outputs = [MODEL_FILE, "run.json", "history.csv"]
    test = dataset.partition("test")
    if len(test):
        ev = evaluate(model, test)
        header, rows = _predictions_rows(ev, dataset.task == "classification")
        _write_csv(os.path.join(args.out, "predictions_test.csv"), header, rows)
        outputs.append("predictions_test.csv")
    _write_manifest(args.out, args, "train", config.seed,
                    {"data": args.data, "indicator": dataset.indicator, "model": args.model},
                    outputs, started)
    if run.history:
        print(f"{run.metric}: train {run.final['train']} test {run.final['test']}")
    return EXIT_OK


def cmd_eval(args):
    started = time.perf_counter()
    container = load_model(args.model)
    meta = container.metadata
    sections = load_directory(args.data)
    if len(sections) != meta["split"]["n_sections"]:
        log.warning("data has %d sections, the model was trained on %d; the split will differ",
                    len(sections), meta["split"]["n_sections"])
    mask = _split_mask(len(sections), meta["split"])
    dataset = encode_dataset(sections, meta["indicator"], container.normalizer, mask)
    part = dataset.partition(args.split)
    ev = evaluate(container.model, part)
    metrics = {"indicator": dataset.indicator, "split": args.split, "metric": ev.metric,
               "value": ev.value, "n_sections": len(part)}
    print(_dump_json(metrics), end="")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(os.path.join(args.out, "metrics.json"), metrics)
        header, rows = _predictions_rows(ev, dataset.task == "classification")
        name = f"predictions_{args.split}.csv"
        _write_csv(os.path.join(args.out, name), header, rows)
        _write_manifest(args.out, args, "eval", meta["split"]["seed"],
                        {"model": args.model, "data": args.data, "split": args.split},
                        ["metrics.json", name], started)
    return EXIT_OK


def cmd_plot(args):
    from . import plotting

    started = time.perf_counter()
    run_json = os.path.join(args.run, "run.json")
    if not os.path.exists(run_json):
        raise FileNotFoundError(f"{run_json}: run artifacts not found")
    run = _read_json(run_json)
    out = args.out or os.path.join(args.run, "plots")
    os.makedirs(out, exist_ok=True)
    name = run["indicator"]
    if args.kind == "history":
        rows = _read_csv(os.path.join(args.run, "history.csv"))
        history = [(int(r["epoch"]), _opt_float(r["train_metric"]), _opt_float(r["test_metric"]))
                   for r in rows]
        plotting.history_plot(history, run["metric"], os.path.join(out, "history.svg"),
                              os.path.join(out, "history.csv"))
    elif args.kind == "scatter":
        rows = _read_csv(os.path.join(args.run, "predictions_test.csv"))
        plotting.scatter_plot([r["section_id"] for r in rows], [float(r["actual"]) for r in rows],
                              [float(r["predicted"]) for r in rows], os.path.join(out, "scatter.svg"),
                              os.path.join(out, "scatter.csv"), name)
    else:
        data = args.data or run["data"]
        sections = {s.section_id: s for s in load_directory(data)}
        preds = {r["section_id"]: r for r in _read_csv(os.path.join(args.run, "predictions_test.csv"))}
        sid = args.section or next(iter(preds), None)
        if sid not in sections:
            raise ValidationError(f"section {sid!r} not found in {data}")
        section = sections[sid]
        j = indicator(name).index - 1
        if sid in preds:
            predicted = float(preds[sid]["predicted"])
        else:
            container = load_model(os.path.join(args.run, MODEL_FILE))
            predicted = _predict_one(container, section, name)
        plotting.trajectory_plot(sid, list(INPUT_YEARS), section.values[:-1, j], TARGET_YEAR,
                                 section.values[-1, j], predicted, os.path.join(out, "trajectory.svg"),
                                 os.path.join(out, "trajectory.csv"), name)
    outputs = [f"{args.kind}.svg", f"{args.kind}.csv"]
    _write_manifest(out, args, "plot", None, {"run": args.run, "kind": args.kind}, outputs, started)
    return EXIT_OK


def _predict_one(container, section, name):
    out = container.model.predict(encode_section(section, container.normalizer).values[None])[0]
    if indicator(name).discrete:
        return float(np.argmax(out) + 1)
    return float(container.normalizer.denormalize(out[0], name))


def cmd_predict(args):
    started = time.perf_counter()
    container = load_model(args.model)
    name = container.metadata["indicator"]
    work_csv = args.work_csv or os.path.join(os.path.dirname(args.section_csv), WORK_FILE)
    sections = ingest_csv(args.section_csv, work_csv, strict=True, require_target=False)
    if not sections:
        raise ValidationError(f"{args.section_csv}: no sections to predict")
    X = np.stack([encode_section(s, container.normalizer).values for s in sections])
    out = container.model.predict(X)
    results = []
    for s, o in zip(sections, out):
        if indicator(name).discrete:
            results.append({"section_id": s.section_id, "level": int(np.argmax(o) + 1),
                            "probabilities": [float(p) for p in o]})
        else:
            results.append({"section_id": s.section_id,
                            "prediction": float(container.normalizer.denormalize(o[0], name))})
    doc = {"indicator": name, "year": TARGET_YEAR, "predictions": results}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(os.path.join(args.out, "predictions.json"), doc)
        _write_manifest(args.out, args, "predict", None,
                        {"model": args.model, "section_csv": args.section_csv, "work_csv": work_csv},
                        ["predictions.json"], started)
    else:
        print(_dump_json(doc), end="")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing

def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _indicator_name(text):
    if text not in INDICATOR_NAMES:
        raise argparse.ArgumentTypeError(
            f"unknown indicator {text!r}; valid names: {', '.join(INDICATOR_NAMES)}")
    return text


def build_parser():
    p = argparse.ArgumentParser(prog="pavedl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"pavedl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate synthetic condition and work-history CSVs")
    s.add_argument("--sections", type=_positive_int, required=True)
    s.add_argument("--seed", type=_nonneg_int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="JSON overrides for the generator constants")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train one model for one indicator")
    t.add_argument("--data", required=True, help="directory holding conditions.csv and work_history.csv")
    t.add_argument("--indicator", type=_indicator_name, required=True)
    t.add_argument("--model", choices=ARCHITECTURES, required=True)
    t.add_argument("--config", help="JSON training config")
    t.add_argument("--epochs", type=_nonneg_int)
    t.add_argument("--seed", type=_nonneg_int)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a trained model on its train or test split")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=("train", "test"), default="test")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("plot", help="render SVG figures from a training run")
    g.add_argument("--run", required=True)
    g.add_argument("--kind", choices=("history", "scatter", "trajectory"), required=True)
    g.add_argument("--section", help="section id for --kind trajectory")
    g.add_argument("--data", help="data directory for --kind trajectory (default: the run's)")
    g.add_argument("--out")
    g.set_defaults(func=cmd_plot)

    r = sub.add_parser("predict", help="predict the 2018 value for new section histories")
    r.add_argument("--model", required=True)
    r.add_argument("--section-csv", required=True)
    r.add_argument("--work-csv", help="work history CSV (default: work_history.csv beside --section-csv)")
    r.add_argument("--out")
    r.set_defaults(func=cmd_predict)
    return p


def _configure_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    args.argv = argv
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pavedl: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as exc:
        print(f"pavedl: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, ParseError, FormatError, ValueError, KeyError) as exc:
        print(f"pavedl: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"pavedl: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
