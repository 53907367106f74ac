"""Report figures rendered to files with the non-interactive Agg backend.

Every function takes an output path and writes a PNG; nothing is shown on
screen. Saves strip the producer metadata so the same inputs give
byte-identical files across runs.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import ConfusionMatrix, per_class_prf

_SAVE_KWARGS = {"dpi": 150, "metadata": {"Software": None}}


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
    return path


def confusion_heatmap(
    matrix: ConfusionMatrix, names: Sequence[str], path: str | Path
) -> Path:
    """Count heatmap with per-cell annotations, rows gold, columns predicted."""
    counts = np.array(matrix.counts, dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    image = ax.imshow(counts, cmap="Blues")
    ax.set_xticks(range(matrix.size), labels=names, rotation=30, ha="right")
    ax.set_yticks(range(matrix.size), labels=names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("gold")
    threshold = counts.max() / 2 if counts.max() > 0 else 0.5
    for i in range(matrix.size):
        for j in range(matrix.size):
            color = "white" if counts[i, j] > threshold else "black"
            ax.text(j, i, str(matrix.counts[i][j]), ha="center", va="center", color=color)
    fig.colorbar(image, ax=ax, shrink=0.8)
    fig.tight_layout()
    return _finish(fig, path)


def per_class_bars(
    matrix: ConfusionMatrix, names: Sequence[str], path: str | Path
) -> Path:
    """Grouped precision/recall/F1 bars for each class."""
    metrics = per_class_prf(matrix)
    x = np.arange(len(metrics))
    width = 0.26
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.bar(x - width, [m.precision for m in metrics], width, label="precision")
    ax.bar(x, [m.recall for m in metrics], width, label="recall")
    ax.bar(x + width, [m.f1 for m in metrics], width, label="F1")
    ax.set_xticks(x, labels=names)
    ax.set_ylim(0, 1.0)
    ax.set_ylabel("score")
    ax.legend(loc="lower right")
    fig.tight_layout()
    return _finish(fig, path)


def training_curves(
    train_loss: Sequence[float], dev_metric: Sequence[float], path: str | Path
) -> Path:
    """Loss and dev macro F1 per epoch on twin axes."""
    epochs = np.arange(1, len(train_loss) + 1)
    fig, ax_loss = plt.subplots(figsize=(6.0, 3.6))
    ax_loss.plot(epochs, train_loss, marker="o", color="tab:red", label="train loss")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("train loss", color="tab:red")
    ax_f1 = ax_loss.twinx()
    ax_f1.plot(epochs, dev_metric, marker="s", color="tab:blue", label="dev macro F1")
    ax_f1.set_ylabel("dev macro F1", color="tab:blue")
    ax_f1.set_ylim(0, 1.05)
    fig.tight_layout()
    return _finish(fig, path)


def grid_heatmap(
    scores: Mapping[tuple[float, float], float],
    learning_rates: Sequence[float],
    decays: Sequence[float],
    path: str | Path,
) -> Path:
    """Mean dev F1 per (learning rate, decay) cell."""
    values = np.full((len(learning_rates), len(decays)), np.nan)
    for i, lr in enumerate(learning_rates):
        for j, decay in enumerate(decays):
            if (lr, decay) in scores:
                values[i, j] = scores[(lr, decay)]
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    image = ax.imshow(values, cmap="viridis")
    ax.set_xticks(range(len(decays)), labels=[str(d) for d in decays])
    ax.set_yticks(range(len(learning_rates)), labels=[f"{lr:g}" for lr in learning_rates])
    ax.set_xlabel("layer-wise decay")
    ax.set_ylabel("base learning rate")
    for i in range(len(learning_rates)):
        for j in range(len(decays)):
            if not np.isnan(values[i, j]):
                ax.text(j, i, f"{values[i, j]:.3f}", ha="center", va="center", color="white")
    fig.colorbar(image, ax=ax, shrink=0.8)
    fig.tight_layout()
    return _finish(fig, path)


def class_distribution_bars(
    counts: Mapping[str, int], path: str | Path, title: str | None = None
) -> Path:
    """Class frequency bars with count labels."""
    names = list(counts)
    values = [counts[n] for n in names]
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    bars = ax.bar(names, values, color="tab:blue")
    ax.bar_label(bars)
    ax.set_ylabel("records")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _finish(fig, path)
