"""Matplotlib renderings of the training curves and the confusion matrix.

These accompany the delimited report files; the CSV/JSON outputs stay the
source of truth. PNG metadata is pinned so repeated renders are identical.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_PNG_META = {"Software": None}  # drop the version string for reproducible bytes


def save_curves_figure(trainlog, path: str | Path) -> Path:
    """Loss and accuracy vs. epochs, train and validation on shared axes."""
    epochs = [r.epoch for r in trainlog.records]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_loss.plot(epochs, [r.train_loss for r in trainlog.records], label="train")
    ax_loss.plot(epochs, [r.val_loss for r in trainlog.records], label="validation")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()
    ax_loss.grid(alpha=0.3)
    ax_acc.plot(epochs, [r.train_acc for r in trainlog.records], label="train")
    ax_acc.plot(epochs, [r.val_acc for r in trainlog.records], label="validation")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_ylim(0.0, 1.05)
    ax_acc.legend()
    ax_acc.grid(alpha=0.3)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return out


def save_confusion_figure(cm, path: str | Path) -> Path:
    """Heatmap of the confusion matrix with per-cell counts."""
    counts = cm.counts
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(counts, cmap="Blues")
    ax.set_xticks(range(cm.k), cm.names, rotation=30, ha="right")
    ax.set_yticks(range(cm.k), cm.names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    threshold = counts.max() / 2 if counts.max() else 0
    for i in range(cm.k):
        for j in range(cm.k):
            ax.text(j, i, str(int(counts[i, j])), ha="center", va="center",
                    color="white" if counts[i, j] > threshold else "black")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return out
