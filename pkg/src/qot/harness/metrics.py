"""Accuracy and confusion matrices."""

from __future__ import annotations

import numpy as np

from ..autograd.engine import ContractError

__all__ = ["confusion_matrix", "accuracy", "format_confusion"]


def confusion_matrix(labels, preds, num_classes: int) -> np.ndarray:
    """Rows are true labels, columns predictions."""
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if labels.shape != preds.shape:
        raise ContractError(f"{labels.size} labels vs {preds.size} predictions")
    for name, arr in (("label", labels), ("prediction", preds)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ContractError(f"{name} outside [0, {num_classes}): range [{arr.min()}, {arr.max()}]")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def accuracy(cm: np.ndarray) -> float:
    total = cm.sum()
    return float(np.trace(cm) / total) if total else 0.0


def format_confusion(cm: np.ndarray) -> str:
    k = cm.shape[0]
    head = "true\\pred\t" + "\t".join(str(j) for j in range(k))
    rows = [f"{i}\t" + "\t".join(str(int(x)) for x in cm[i]) for i in range(k)]
    return "\n".join([head, *rows])
