"""Quaternion orthogonal transformer: quaternion algebra, a small reverse-mode
autograd engine, quaternion layers, the Q-ViT classifier and the orthogonal
feature decomposition, plus a CLI harness for training and accounting."""

from . import autograd, qcore, qnn
from .model import QOT, build_model
from .ortho import OrthoHead, ToyBackbone, build_quaternion, decompose
from .qcore import Quaternion, hamilton, left_matrix
from .qvit import QViT, QViTConfig, RealViT

__version__ = "0.1.0"

__all__ = [
    "QOT", "QViT", "QViTConfig", "Quaternion", "RealViT", "OrthoHead", "ToyBackbone",
    "autograd", "build_model", "build_quaternion", "decompose", "hamilton", "left_matrix",
    "qcore", "qnn",
]
