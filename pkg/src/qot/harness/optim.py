"""SGD and Adam over named parameters; quaternion weights update component-wise."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from ..autograd.engine import ContractError, Var

__all__ = ["Optimizer", "SGD", "Adam", "make_optimizer"]


class Optimizer:
    def __init__(self, params: Mapping[str, Var], lr: float):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = dict(params)
        self.lr = lr
        self.steps = 0

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def _grads(self, grads: Mapping[str, np.ndarray] | None):
        for name, p in self.params.items():
            g = p.grad if grads is None else grads.get(name)
            if g is None:
                continue
            if g.shape != p.shape:
                raise ContractError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
            yield name, p, g

    def step(self, grads: Mapping[str, np.ndarray] | None = None):
        self.steps += 1
        for name, p, g in self._grads(grads):
            p.value = self._update(name, p.value, g.astype(p.dtype, copy=False))

    def _update(self, name, value, grad):  # pragma: no cover - abstract
        raise NotImplementedError


class SGD(Optimizer):
    def __init__(self, params, lr: float = 0.01, momentum: float = 0.0):
        super().__init__(params, lr)
        self.momentum = momentum
        self.velocity: dict[str, np.ndarray] = {}

    def _update(self, name, value, grad):
        if self.momentum:
            v = self.velocity.get(name)
            v = grad.copy() if v is None else self.momentum * v + grad
            self.velocity[name] = v
            grad = v
        return value - self.lr * grad


class Adam(Optimizer):
    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: dict[str, int] = {}

    def _update(self, name, value, grad):
        t = self.t.get(name, 0) + 1
        self.t[name] = t
        m = self.m.get(name, np.zeros_like(value))
        v = self.v.get(name, np.zeros_like(value))
        m = self.beta1 * m + (1 - self.beta1) * grad
        v = self.beta2 * v + (1 - self.beta2) * grad * grad
        self.m[name], self.v[name] = m, v
        m_hat = m / (1 - self.beta1**t)
        v_hat = v / (1 - self.beta2**t)
        return (value - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(value.dtype, copy=False)


def make_optimizer(kind: str, params, lr: float, momentum: float = 0.0) -> Optimizer:
    if kind == "adam":
        return Adam(params, lr=lr)
    if kind == "sgd":
        return SGD(params, lr=lr, momentum=momentum)
    raise ValueError(f"unknown optimizer {kind!r}")
