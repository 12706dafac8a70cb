"""Parameterized layers and the minimal ``Module`` container."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from ..autograd.engine import Var, reshape
from ..qcore import DimensionError
from . import functional as F

__all__ = [
    "Module",
    "ModuleList",
    "quat_uniform",
    "QFC",
    "QConv",
    "QLayerNorm",
    "Linear",
    "Conv2d",
    "LayerNorm",
]


class Module:
    """Base container. Any ``Var`` attribute is a parameter; ``Module`` attributes are children."""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError

    def named_children(self) -> Iterator[tuple[str, "Module"]]:
        for name, val in vars(self).items():
            if isinstance(val, Module):
                yield name, val

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Var]]:
        for name, val in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(val, Var):
                yield full, val
            elif isinstance(val, Module):
                yield from val.named_parameters(full + ".")

    def parameters(self) -> list[Var]:
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self) -> dict[str, Var]:
        return {n: p for n, p in self.named_parameters() if p.requires_grad}

    def num_params(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def freeze(self) -> "Module":
        for p in self.parameters():
            p.requires_grad = False
            p.zero_grad()
        return self

    def unfreeze(self) -> "Module":
        for p in self.parameters():
            p.requires_grad = True
        return self

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.value = np.ascontiguousarray(p.value, dtype=dtype)
            p.zero_grad()
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.value.copy() for n, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True):
        own = dict(self.named_parameters())
        if strict:
            missing = own.keys() - state.keys()
            unexpected = state.keys() - own.keys()
            if missing or unexpected:
                raise KeyError(f"state mismatch; missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            if name not in state:
                continue
            val = np.asarray(state[name])
            if val.shape != p.shape:
                raise DimensionError(f"{name}: stored shape {val.shape} != parameter shape {p.shape}")
            p.value = np.array(val, dtype=p.dtype, copy=True)
            p.zero_grad()


class ModuleList(Module):
    def __init__(self, modules=()):
        for i, m in enumerate(modules):
            setattr(self, str(i), m)

    def __iter__(self):
        return (m for _, m in self.named_children())

    def __len__(self):
        return sum(1 for _ in self.named_children())

    def __getitem__(self, i):
        return getattr(self, str(i % len(self)))


def quat_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape, dtype=np.float64) -> np.ndarray:
    """Glorot-style draw counting each quaternion as four real inputs/outputs."""
    s = math.sqrt(6.0 / (4 * fan_in + 4 * fan_out))
    return rng.uniform(-s, s, size=tuple(shape) + (4,)).astype(dtype)


def _param(value, name) -> Var:
    return Var(np.ascontiguousarray(value), requires_grad=True, name=name)


class QFC(Module):
    """Quaternion fully-connected layer, ``D_in -> D_out`` quaternions."""

    def __init__(self, d_in: int, d_out: int, bias: bool = True, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d_in, self.d_out = d_in, d_out
        self.weight = _param(quat_uniform(rng, d_in, d_out, (d_in, d_out), dtype), "weight")
        if bias:
            self.bias = _param(np.zeros((d_out, 4), dtype=dtype), "bias")
        else:
            self.bias = None

    def forward(self, x):
        return F.qlinear(x, self.weight, self.bias)


class QConv(Module):
    """Quaternion 2-D convolution on [B, H, W, C_in, 4] inputs."""

    def __init__(self, c_in: int, c_out: int, kernel_size: int = 1, stride: int = 1, padding: int = 0,
                 bias: bool = True, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        k = kernel_size
        self.c_in, self.c_out, self.kernel_size = c_in, c_out, k
        self.stride, self.padding = stride, padding
        self.kernel = _param(quat_uniform(rng, k * k * c_in, k * k * c_out, (k, k, c_in, c_out), dtype), "kernel")
        self.bias = _param(np.zeros((c_out, 4), dtype=dtype), "bias") if bias else None

    def forward(self, x):
        return F.qconv2d(x, self.kernel, self.bias, self.stride, self.padding)

    def pointwise(self, x):
        """Apply a 1x1 kernel directly to a token sequence [..., T, C_in, 4]."""
        if self.kernel_size != 1 or self.stride != 1 or self.padding != 0:
            raise DimensionError("pointwise application needs a 1x1, stride-1, unpadded kernel")
        return F.qlinear(x, reshape(self.kernel, (self.c_in, self.c_out, 4)), self.bias)


class QLayerNorm(Module):
    """LayerNorm over all ``4 * width`` reals of each quaternion token."""

    def __init__(self, width: int, eps: float = 1e-5, dtype=np.float64):
        self.width, self.eps = width, eps
        self.gamma = _param(np.ones(4 * width, dtype=dtype), "gamma")
        self.beta = _param(np.zeros(4 * width, dtype=dtype), "beta")

    def forward(self, x):
        if x.shape[-2:] != (self.width, 4):
            raise DimensionError(f"QLayerNorm({self.width}) got input {x.shape}")
        lead = x.shape[:-2]
        y = F.layer_norm(reshape(x, lead + (4 * self.width,)), self.gamma, self.beta, self.eps)
        return reshape(y, lead + (self.width, 4))


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, bias: bool = True, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        s = math.sqrt(6.0 / (d_in + d_out))
        self.d_in, self.d_out = d_in, d_out
        self.weight = _param(rng.uniform(-s, s, size=(d_in, d_out)).astype(dtype), "weight")
        self.bias = _param(np.zeros(d_out, dtype=dtype), "bias") if bias else None

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class Conv2d(Module):
    """Real NHWC convolution; He-uniform init since it feeds ReLUs."""

    def __init__(self, c_in: int, c_out: int, kernel_size: int = 3, stride: int = 1, padding: int = 0,
                 bias: bool = True, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        k = kernel_size
        s = math.sqrt(6.0 / (k * k * c_in))
        self.c_in, self.c_out, self.kernel_size = c_in, c_out, k
        self.stride, self.padding = stride, padding
        self.kernel = _param(rng.uniform(-s, s, size=(k, k, c_in, c_out)).astype(dtype), "kernel")
        self.bias = _param(np.zeros(c_out, dtype=dtype), "bias") if bias else None

    def forward(self, x):
        return F.conv2d(x, self.kernel, self.bias, self.stride, self.padding)


class LayerNorm(Module):
    def __init__(self, width: int, eps: float = 1e-5, dtype=np.float64):
        self.width, self.eps = width, eps
        self.gamma = _param(np.ones(width, dtype=dtype), "gamma")
        self.beta = _param(np.zeros(width, dtype=dtype), "beta")

    def forward(self, x):
        return F.layer_norm(x, self.gamma, self.beta, self.eps)
