"""Figures written next to the tab-separated reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_metrics", "plot_confusion", "plot_costs"]


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_metrics(rows: Sequence, path) -> Path:
    """Loss and accuracy per epoch, one line per split."""
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.5))
    splits = list(dict.fromkeys(r.split for r in rows))
    for split in splits:
        sel = [r for r in rows if r.split == split]
        ep = [r.epoch for r in sel]
        ax_loss.plot(ep, [r.loss for r in sel], marker="o", ms=3, label=split)
        ax_acc.plot(ep, [r.accuracy for r in sel], marker="o", ms=3, label=split)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.set_yscale("log")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_ylim(0, 1.02)
    ax_acc.legend(frameon=False)
    return _save(fig, path)


def plot_confusion(cm: np.ndarray, path, labels: Sequence[str] | None = None) -> Path:
    k = cm.shape[0]
    labels = list(labels) if labels is not None else [str(i) for i in range(k)]
    rows = cm.sum(axis=1, keepdims=True)
    frac = np.divide(cm, rows, out=np.zeros(cm.shape, dtype=float), where=rows > 0)
    fig, ax = plt.subplots(figsize=(0.6 * k + 2, 0.6 * k + 1.5))
    im = ax.imshow(frac, cmap="Blues", vmin=0, vmax=1)
    for i in range(k):
        for j in range(k):
            ax.text(j, i, str(int(cm[i, j])), ha="center", va="center",
                    color="white" if frac[i, j] > 0.5 else "black", fontsize=8)
    ax.set_xticks(range(k), labels)
    ax.set_yticks(range(k), labels)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    fig.colorbar(im, ax=ax, fraction=0.046)
    return _save(fig, path)


def plot_costs(reports: dict, path) -> Path:
    """Bar chart of parameter and FLOP totals for several models."""
    names = list(reports)
    params = [reports[n].total_params / 1e6 for n in names]
    flops = [reports[n].total_flops / 1e6 for n in names]
    fig, (a, b) = plt.subplots(1, 2, figsize=(8, 3))
    a.bar(names, params, color="tab:blue")
    a.set_ylabel("params (M)")
    b.bar(names, flops, color="tab:orange")
    b.set_ylabel("FLOPs (M)")
    return _save(fig, path)
