"""Deterministic SVG figures: metric history, actual-vs-predicted, section trajectory.

Every figure is written next to a CSV holding exactly the plotted numbers.
SVG ids are salted with a constant and the date stamp is omitted, so identical
inputs give identical files.
"""

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "pavedl", "svg.fonttype": "none", "font.family": "DejaVu Sans"}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v):
    return "" if v is None else repr(float(v))


def history_plot(history, metric, svg_path, csv_path):
    """Metric vs. epoch; ``history`` is a list of (epoch, train, test) triples."""
    epochs = [h[0] for h in history]
    train = [np.nan if h[1] is None else h[1] for h in history]
    test = [np.nan if h[2] is None else h[2] for h in history]
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(epochs, train, label="training")
        ax.plot(epochs, test, label="testing")
        ax.set_xlabel("Epoch")
        ax.set_ylabel("R² score" if metric == "r2" else "Accuracy")
        ax.legend()
        _save(fig, svg_path)
    _write_csv(csv_path, ("epoch", "training", "testing"),
               [(e, _fmt(h[1]), _fmt(h[2])) for e, h in zip(epochs, history)])


def scatter_plot(section_ids, actual, predicted, svg_path, csv_path, label="value"):
    """Actual vs. predicted with the identity line."""
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 5))
        ax.scatter(actual, predicted, s=6, alpha=0.6, label="sections")
        if len(actual):
            lo = float(min(actual.min(), predicted.min()))
            hi = float(max(actual.max(), predicted.max()))
            ax.plot([lo, hi], [lo, hi], color="black", linewidth=1, label="identity")
        ax.set_xlabel(f"Actual {label}")
        ax.set_ylabel(f"Predicted {label}")
        ax.legend()
        _save(fig, svg_path)
    _write_csv(csv_path, ("section_id", "actual", "predicted"),
               [(s, _fmt(a), _fmt(p)) for s, a, p in zip(section_ids, actual, predicted)])


def trajectory_plot(section_id, years, values, target_year, actual, predicted, svg_path, csv_path,
                    label="value"):
    """One section's input series plus the actual and predicted target-year points."""
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(years, values, marker="o", markersize=3, label="history")
        ax.scatter([target_year], [actual], marker="s", color="black", zorder=3, label="actual")
        ax.scatter([target_year], [predicted], marker="x", color="red", zorder=3, label="predicted")
        ax.set_xlabel("Year")
        ax.set_ylabel(label)
        ax.set_title(f"Section {section_id}")
        ax.legend()
        _save(fig, svg_path)
    rows = [(y, _fmt(v), "history") for y, v in zip(years, values)]
    rows += [(target_year, _fmt(actual), "actual"), (target_year, _fmt(predicted), "predicted")]
    _write_csv(csv_path, ("year", "value", "kind"), rows)
