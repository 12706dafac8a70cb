"""The full classifier: feature extractor, orthogonal head and Q-ViT."""

from __future__ import annotations

import numpy as np

from .autograd.engine import Var, as_var, concat
from .ortho import OrthoHead, PrecomputedBackbone, ToyBackbone, build_quaternion, decompose
from .qnn.layers import Module
from .qvit import QViT

__all__ = ["QOT", "build_model"]


class QOT(Module):
    def __init__(self, cfg, seed: int = 0):
        """``cfg`` is a :class:`qot.harness.config.RunConfig`."""
        rng = np.random.default_rng(seed)
        dtype = np.dtype(cfg.dtype)
        self.cfg = cfg
        if cfg.backbone == "toy":
            self.backbone = ToyBackbone(cfg.in_channels, cfg.backbone_channels, rng=rng, dtype=dtype)
        else:
            self.backbone = PrecomputedBackbone(cfg.feature_dim)
        self.head = OrthoHead(self.backbone.out_channels, cfg.C, cfg.num_classes, rng=rng, dtype=dtype)
        self.qvit = QViT(cfg.qvit, dtype=dtype, rng=rng)

    def decompose(self, x):
        return decompose(self.backbone(x), self.head)

    def quaternion_features(self, x) -> Var:
        """[B, H, W, C, 4] quaternion features for a batch of images (or precomputed maps)."""
        return build_quaternion(*self.decompose(x).maps)

    def aux_logits(self, dec) -> Var:
        return self.head.aux(concat(dec.pooled, axis=-1))

    def forward(self, x) -> Var:
        return self.qvit(self.quaternion_features(x))

    def cast_input(self, x) -> np.ndarray:
        return np.asarray(x, dtype=self.cfg.dtype)


def build_model(cfg, seed: int = 0) -> QOT:
    return QOT(cfg, seed=seed)
