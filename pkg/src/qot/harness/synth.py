"""Synthetic blob images standing in for face datasets."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .tensorio import read_manifest, read_tensor, write_manifest, write_tensor

__all__ = ["class_prototype", "render_sample", "synth_dataset", "load_split", "nearest_centroid_accuracy"]

NOISE_SIGMA = 0.1


def class_prototype(k: int, num_classes: int, size: int = 56) -> tuple[float, float, float]:
    """(row, col, sigma) of the blob for class ``k``: evenly spaced on a ring, scale cycling."""
    angle = 2.0 * math.pi * k / num_classes
    radius = 0.25 * size
    c = (size - 1) / 2.0
    sigma = (0.06 + 0.03 * (k % 3)) * size
    return c + radius * math.sin(angle), c + radius * math.cos(angle), sigma


def render_sample(k: int, num_classes: int, rng: np.random.Generator, size: int = 56) -> np.ndarray:
    r0, c0, s = class_prototype(k, num_classes, size)
    r0 += rng.normal(0.0, 0.03 * size)
    c0 += rng.normal(0.0, 0.03 * size)
    s *= rng.uniform(0.85, 1.15)
    amp = rng.uniform(0.7, 1.0)
    rr, cc = np.mgrid[0:size, 0:size]
    img = amp * np.exp(-((rr - r0) ** 2 + (cc - c0) ** 2) / (2.0 * s * s))
    img = img + rng.normal(0.0, NOISE_SIGMA, size=img.shape)
    return img.astype(np.float32)[:, :, None]


def synth_dataset(out_dir, num_classes: int = 7, n_per_class: int = 100, seed: int = 0,
                  size: int = 56) -> Path:
    """Write ``num_classes * n_per_class`` image tensors plus ``manifest.tsv``; returns the manifest path."""
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(num_classes):
        for n in range(n_per_class):
            rel = f"images/c{k}_{n:05d}.qt"
            write_tensor(out / rel, render_sample(k, num_classes, rng, size))
            rows.append((rel, k))
    manifest = out / "manifest.tsv"
    write_manifest(manifest, rows)
    return manifest


def load_split(manifest, num_classes: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Stack every referenced tensor into one array; returns (data [N, ...], labels [N])."""
    entries = read_manifest(manifest, num_classes)
    if not entries:
        raise ValueError(f"{manifest}: manifest is empty")
    arrays = [read_tensor(e.path) for e in entries]
    shape = arrays[0].shape
    for e, a in zip(entries, arrays):
        if a.shape != shape:
            raise ValueError(f"{e.path}: shape {a.shape} differs from {shape}")
    return np.stack(arrays), np.array([e.label for e in entries], dtype=np.int64)


def nearest_centroid_accuracy(x_train, y_train, x_test, y_test) -> float:
    """Pixel-space nearest-centroid classifier; certifies that the classes are separable."""
    xt = x_train.reshape(len(x_train), -1).astype(np.float64)
    xs = x_test.reshape(len(x_test), -1).astype(np.float64)
    classes = np.unique(y_train)
    cents = np.stack([xt[y_train == k].mean(axis=0) for k in classes])
    d = ((xs[:, None, :] - cents[None]) ** 2).sum(axis=-1)
    return float((classes[d.argmin(axis=1)] == y_test).mean())
