"""Figures written next to the text/TSV outputs: confusion matrices, training curves, attention."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

# no Software/date stamps, so reruns produce identical files
_METADATA = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, metadata=_METADATA)
    plt.close(fig)
    return path


def plot_confusion(counts: np.ndarray, labels: Sequence[str], path, title: str = "") -> Path:
    counts = np.asarray(counts)
    k = len(labels)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(1.2 + 0.75 * k, 0.9 + 0.6 * k))
        ax.imshow(counts, cmap="Blues", vmin=0)
        ax.set_xticks(range(k), labels, rotation=45, ha="right")
        ax.set_yticks(range(k), labels)
        ax.set_xlabel("predicted")
        ax.set_ylabel("gold")
        threshold = counts.max() / 2 if counts.size else 0
        for (i, j), v in np.ndenumerate(counts):
            ax.text(j, i, str(v), ha="center", va="center", color="white" if v > threshold else "black")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_history(history, path, title: str = "") -> Path:
    epochs = [h.epoch for h in history]
    with plt.rc_context(STYLE):
        fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(7.0, 2.6))
        ax_loss.plot(epochs, [h.train_loss for h in history], marker="o", ms=3)
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("loss per utterance")
        ax_acc.plot(epochs, [h.train_accuracy for h in history], marker="o", ms=3, label="train")
        val = [h.val_accuracy for h in history]
        if not all(np.isnan(val)):
            ax_acc.plot(epochs, val, marker="s", ms=3, label="validation")
        ax_acc.set_xlabel("epoch")
        ax_acc.set_ylabel("accuracy")
        ax_acc.set_ylim(0, 1.02)
        ax_acc.legend(frameon=False)
        if title:
            fig.suptitle(title)
        return _save(fig, path)


def plot_attention(tokens: Sequence[str], weights: np.ndarray, path, title: str = "") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(2.5, 0.55 * len(tokens)), 1.4))
        ax.imshow(np.asarray(weights)[None, :], cmap="Oranges", vmin=0, aspect="auto")
        ax.set_xticks(range(len(tokens)), tokens, rotation=45, ha="right")
        ax.set_yticks([])
        if title:
            ax.set_title(title)
        return _save(fig, path)
