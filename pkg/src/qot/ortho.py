"""Orthogonal feature decomposition and the quaternion feature builder."""

from __future__ import annotations

from typing import NamedTuple, Protocol, Sequence

import numpy as np

from .autograd.engine import Var, as_var, backward, concat, relu, stack
from .qcore import DimensionError
from .qnn import functional as F
from .qnn.layers import Conv2d, Linear, Module, ModuleList
from .qnn.losses import LossWeights, combined_loss, cross_entropy, orthogonal_loss

__all__ = [
    "Backbone",
    "ToyBackbone",
    "PrecomputedBackbone",
    "OrthoHead",
    "Decomposition",
    "decompose",
    "build_quaternion",
    "quaternion_components",
    "FinetuneResult",
    "finetune_step",
    "extract_pipeline",
]


class Backbone(Protocol):
    """Anything mapping a batch [B, ...] to real feature maps [B, H, W, D_f]."""

    out_channels: int

    def __call__(self, x) -> Var: ...

    def parameters(self) -> list[Var]: ...


class ToyBackbone(Module):
    """Small ReLU CNN: 56x56 images down to 7x7 maps.

    The first block keeps full resolution; the other three halve it.
    """

    def __init__(self, in_channels: int = 1, channels: Sequence[int] = (16, 32, 64, 64),
                 strides: Sequence[int] = (1, 2, 2, 2), rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        if len(channels) != len(strides):
            raise ValueError("channels and strides must have equal length")
        widths = [in_channels, *channels]
        self.convs = ModuleList(
            [Conv2d(widths[i], widths[i + 1], 3, stride=s, padding=1, rng=rng, dtype=dtype)
             for i, s in enumerate(strides)]
        )
        self.in_channels = in_channels
        self.out_channels = widths[-1]

    def forward(self, x):
        x = as_var(x)
        if x.ndim != 4 or x.shape[-1] != self.in_channels:
            raise DimensionError(f"backbone expects [B, H, W, {self.in_channels}] images, got {x.shape}")
        for conv in self.convs:
            x = relu(conv(x))
        return x


class PrecomputedBackbone(Module):
    """Identity stand-in for users who bring their own feature extractor."""

    def __init__(self, out_channels: int):
        self.out_channels = out_channels

    def forward(self, x):
        x = as_var(x)
        if x.ndim != 4 or x.shape[-1] != self.out_channels:
            raise DimensionError(f"precomputed features must be [B, H, W, {self.out_channels}], got {x.shape}")
        return x


class OrthoHead(Module):
    """Three independent 1x1 convolutions plus the auxiliary classifier used while fine-tuning."""

    def __init__(self, in_channels: int, width: int = 64, num_classes: int = 7, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels, self.width = in_channels, width
        self.branches = ModuleList([Conv2d(in_channels, width, 1, rng=rng, dtype=dtype) for _ in range(3)])
        self.aux = Linear(3 * width, num_classes, rng=rng, dtype=dtype)


class Decomposition(NamedTuple):
    maps: list[Var]  # U_i, [B, H, W, width]
    pooled: list[Var]  # GAP(U_i) before softmax, [B, width]
    vectors: list[Var]  # softmax(GAP(U_i)), [B, width]


def decompose(features, head: OrthoHead) -> Decomposition:
    features = as_var(features)
    if features.ndim != 4 or features.shape[-1] != head.in_channels:
        raise DimensionError(f"features {features.shape} do not match head input width {head.in_channels}")
    maps = [branch(features) for branch in head.branches]
    pooled = [F.gap(u) for u in maps]
    vectors = [F.softmax(g, axis=-1) for g in pooled]
    return Decomposition(maps, pooled, vectors)


def build_quaternion(f1, f2, f3) -> Var:
    """Stack ``(mean(f1, f2, f3), f1, f2, f3)`` as (r, i, j, k) on a new trailing axis."""
    fs = [as_var(f) for f in (f1, f2, f3)]
    if not fs[0].shape == fs[1].shape == fs[2].shape:
        raise DimensionError(f"feature shapes differ: {[f.shape for f in fs]}")
    ave = (fs[0] + fs[1] + fs[2]) * (1.0 / 3.0)
    return stack([ave, *fs], axis=-1)


def quaternion_components(q) -> tuple[np.ndarray, ...]:
    q = q.value if isinstance(q, Var) else np.asarray(q)
    return tuple(q[..., c] for c in range(4))


class FinetuneResult(NamedTuple):
    loss: float
    ce: float
    ortho: float


def finetune_step(x, labels, backbone, head: OrthoHead, weights: LossWeights) -> FinetuneResult:
    """One forward/backward pass of cross-entropy plus weighted orthogonal loss.

    Gradients are accumulated into every parameter that requires them; the
    caller owns zeroing and the optimizer step.
    """
    dec = decompose(backbone(x), head)
    logits = head.aux(concat(dec.pooled, axis=-1))
    ce = cross_entropy(logits, labels)
    ortho = orthogonal_loss(*dec.vectors)
    loss = combined_loss(ce, ortho, weights)
    backward(loss)
    return FinetuneResult(loss.item(), ce.item(), ortho.item())


def extract_pipeline(x, backbone, head: OrthoHead) -> Var:
    """Input batch -> backbone -> decomposition -> quaternion features [B, H, W, width, 4]."""
    dec = decompose(backbone(x), head)
    return build_quaternion(*dec.maps)
