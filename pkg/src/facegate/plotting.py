"""Report figures, written straight to files (Agg backend, no display)."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0
STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def new_figure(width: float = 5.0, height: float | None = None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height or width * GOLDEN))
    return fig, ax


def save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig.tight_layout()
        # no timestamps or version strings, so reruns are byte-stable
        fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_window_sweep(rows, path) -> Path:
    sizes = [r[0] for r in rows]
    acc = [100 * r[1] for r in rows]
    fig, ax = new_figure()
    ax.plot(sizes, acc, "o-", color="tab:blue")
    for s, a in zip(sizes, acc):
        ax.annotate(f"{a:.1f}", (s, a), textcoords="offset points", xytext=(0, 6), ha="center", fontsize=7)
    ax.set_xlabel("window size (s)")
    ax.set_ylabel("accuracy (%)")
    ax.set_title("Accuracy by window size")
    return save(fig, path)


def plot_feature_sweep(ks, accuracies, elbow_k: int, path) -> Path:
    acc = 100 * np.asarray(accuracies, dtype=float)
    fig, ax = new_figure(6.0)
    ax.plot(ks, acc, "-", color="tab:blue", lw=1)
    i = list(ks).index(elbow_k)
    ax.plot([elbow_k], [acc[i]], "x", color="red", ms=10, mew=2, label=f"elbow: top {elbow_k}")
    ax.set_xlabel("number of top-ranked features")
    ax.set_ylabel("accuracy (%)")
    ax.legend(loc="lower right")
    ax.set_title("Accuracy by feature count")
    return save(fig, path)


def plot_confusion(matrix, path, title: str = "Confusion matrix") -> Path:
    m = matrix.as_array()
    fig, ax = new_figure(3.6, 3.2)
    ax.imshow(m, cmap="Blues")
    labels = ["NoFace", "Face"]
    ax.set_xticks([0, 1], labels)
    ax.set_yticks([0, 1], labels)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    peak = m.max() if m.max() > 0 else 1
    for r in range(2):
        for c in range(2):
            ax.text(c, r, str(m[r, c]), ha="center", va="center",
                    color="white" if m[r, c] > peak / 2 else "black")
    ax.set_title(title)
    return save(fig, path)


def plot_pca_curve(rows, path) -> Path:
    fig, ax = new_figure()
    ax.plot([r[0] for r in rows], [r[1] for r in rows], "s-", color="tab:green")
    ax.set_xlabel("participants combined")
    ax.set_ylabel("variance of 1st component (%)")
    ax.set_xticks([r[0] for r in rows])
    return save(fig, path)


def plot_gate_trace(t, resultant, passed, path, title: str = "STA/LTA gate") -> Path:
    t = np.asarray(t)
    fig, ax = new_figure(7.0, 2.8)
    ax.plot(t, resultant, lw=0.6, color="0.3", label="resultant acceleration")
    passed = np.asarray(passed, dtype=bool)
    if passed.any():
        lo, hi = float(np.min(resultant)), float(np.max(resultant))
        ax.fill_between(t, lo, hi, where=passed, color="tab:red", alpha=0.25, step="mid", label="gate open")
    ax.set_xlabel("time (s)")
    ax.legend(loc="upper right")
    ax.set_title(title)
    return save(fig, path)


def plot_importances(names, importances, path, top: int = 25) -> Path:
    imp = np.asarray(importances, dtype=float)
    order = np.lexsort((np.arange(len(imp)), -imp))[:top]
    fig, ax = new_figure(6.0, 0.22 * len(order) + 1.0)
    ax.barh(range(len(order))[::-1], imp[order], color="tab:orange")
    ax.set_yticks(range(len(order))[::-1], [names[i] for i in order], fontsize=6)
    ax.set_xlabel("mean decrease in impurity")
    return save(fig, path)
