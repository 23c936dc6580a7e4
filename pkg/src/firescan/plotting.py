"""Report figures: per-class recognition bars and a plan-view location map."""
from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import CLASS_COLORS, atomic_write  # noqa: E402

RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "firescan",
}


def _save(fig, path) -> Path:
    buf = io.BytesIO()
    # no timestamps or version strings, so reruns are byte-identical
    fig.savefig(buf, format="png", dpi=120, metadata={"Software": None})
    plt.close(fig)
    return atomic_write(path, buf.getvalue())


def plot_class_metrics(report, path) -> Path:
    rows = [r for r in report.rows if r.gt > 0 or r.fp > 0]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(rows) + 1.5), 3.2))
        x = np.arange(len(rows))
        for k, (attr, label) in enumerate((("precision", "Precision"), ("recall", "Recall"), ("f1", "F1"))):
            ax.bar(x + (k - 1) * 0.27, [100 * getattr(r, attr) for r in rows], 0.27, label=label)
        ax.set_xticks(x)
        ax.set_xticklabels([r.name for r in rows], rotation=30, ha="right")
        ax.set_ylim(0, 105)
        ax.set_ylabel("%")
        ax.set_title(f"Macro P {100 * report.precision:.0f}%  R {100 * report.recall:.0f}%  "
                     f"F1 {100 * report.f1:.0f}%")
        ax.legend(loc="upper left", bbox_to_anchor=(1.0, 1.0), frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_locations(pred, truth, matching, path) -> Path:
    """Top view (x-y) of ground truth vs predictions, TP pairs joined."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for inst in truth:
            c = CLASS_COLORS[inst.class_id % len(CLASS_COLORS)] / 255
            ax.scatter(*inst.centroid[:2], s=40, facecolors="none", edgecolors=[c], linewidths=1.2)
        for inst in pred:
            c = CLASS_COLORS[inst.class_id % len(CLASS_COLORS)] / 255
            ax.scatter(*inst.centroid[:2], s=30, marker="x", c=[c])
        for p, g, _ in matching.pairs:
            a, b = pred[p].centroid, truth[g].centroid
            ax.plot([a[0], b[0]], [a[1], b[1]], color="0.4", lw=0.7)
        ax.scatter([], [], s=40, facecolors="none", edgecolors="k", label="ground truth")
        ax.scatter([], [], s=30, marker="x", c="k", label="predicted")
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
        ax.legend(loc="best", frameon=False)
        fig.tight_layout()
        return _save(fig, path)
