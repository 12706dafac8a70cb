"""Define-by-run reverse-mode differentiation over numpy arrays."""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Var",
    "ContractError",
    "Tape",
    "backward",
    "no_grad",
    "is_grad_enabled",
    "register_op",
    "OP_REGISTRY",
    "as_var",
    "make_node",
    "unbroadcast",
    "flush_subnormal",
]

# name -> callable; every differentiable op that must pass the gradient certification suite
OP_REGISTRY: dict[str, Callable] = {}

_GRAD_ENABLED = True


class ContractError(ValueError):
    """Raised when a caller violates an operation's preconditions."""


def register_op(name: str):
    def deco(fn):
        OP_REGISTRY[name] = fn
        return fn

    return deco


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Var:
    """A node in the computation graph.

    ``value`` is the ndarray; ``grad`` is allocated lazily on the first
    backward pass that reaches this node.
    """

    __slots__ = ("value", "grad", "requires_grad", "parents", "_backward", "name", "__weakref__")
    __array_priority__ = 100.0

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.parents: tuple[Var, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Var(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def is_leaf(self) -> bool:
        return not self.parents

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return self.value.item()

    def detach(self) -> "Var":
        return Var(self.value)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    # operators -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_var(x, dtype=None) -> Var:
    if isinstance(x, Var):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Var(arr)


def flush_subnormal(a: np.ndarray) -> np.ndarray:
    """Zero out subnormal entries in place; they put BLAS on a very slow path."""
    if a.dtype.kind == "f":
        a[np.abs(a) < np.finfo(a.dtype).tiny] = 0
    return a


# float32 gradients below this are zeroed during backward: their products land
# in the subnormal range, which is ~50x slower in BLAS, and they are far below
# anything an optimizer step with eps ~1e-8 can resolve
GRAD_FLUSH_F32 = 1e-30


def _flush_grad(g: np.ndarray) -> np.ndarray:
    if g.dtype == np.float32:
        small = np.abs(g) < GRAD_FLUSH_F32
        if small.any():
            if not g.flags.writeable:
                return np.where(small, np.float32(0), g)
            g[small] = 0
    return g


def make_node(value: np.ndarray, parents: Sequence[Var], backward_fn) -> Var:
    """Wrap an op result; records the backward rule only if some parent needs a gradient."""
    out = Var(value)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out._backward = backward_fn
    return out


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tape:
    """Reverse topological ordering of the graph that produced ``root``."""

    def __init__(self, root: Var):
        self.root = root
        self.nodes: list[Var] = self._toposort(root)

    @staticmethod
    def _toposort(root: Var) -> list[Var]:
        order: list[Var] = []
        seen: set[int] = set()
        stack: list[tuple[Var, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        order.reverse()
        return order

    def __iter__(self):
        return iter(self.nodes)

    def __len__(self):
        return len(self.nodes)


def backward(loss: Var) -> Tape:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires it.

    Intermediate gradients are freed once propagated; leaves keep theirs and
    accumulate across calls until :meth:`Var.zero_grad`.
    """
    if not isinstance(loss, Var):
        raise ContractError("backward() expects a Var")
    if loss.value.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    tape = Tape(loss)
    if not loss.requires_grad:
        return tape
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in tape:
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node._backward(_flush_grad(g))):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return tape


# ---------------------------------------------------------------------------
# elementary ops


def _binary(a, b):
    # python scalars and arrays adopt the dtype of the Var operand
    if isinstance(a, Var):
        return a, as_var(b, dtype=None if isinstance(b, Var) else a.dtype)
    b = as_var(b)
    return as_var(a, dtype=b.dtype), b


@register_op("add")
def add(a, b) -> Var:
    a, b = _binary(a, b)
    out = a.value + b.value
    return make_node(out, (a, b), lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


@register_op("sub")
def sub(a, b) -> Var:
    a, b = _binary(a, b)
    out = a.value - b.value
    return make_node(out, (a, b), lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


@register_op("mul")
def mul(a, b) -> Var:
    a, b = _binary(a, b)
    av, bv = a.value, b.value
    return make_node(
        av * bv, (a, b), lambda g: (unbroadcast(g * bv, a.shape), unbroadcast(g * av, b.shape))
    )


@register_op("div")
def div(a, b) -> Var:
    a, b = _binary(a, b)
    av, bv = a.value, b.value
    out = av / bv
    return make_node(
        out, (a, b), lambda g: (unbroadcast(g / bv, a.shape), unbroadcast(-g * out / bv, b.shape))
    )


def neg(a) -> Var:
    a = as_var(a)
    return make_node(-a.value, (a,), lambda g: (-g,))


@register_op("matmul")
def matmul(a, b) -> Var:
    a, b = _binary(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ContractError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    av, bv = a.value, b.value

    def bw(g):
        ga = g @ np.swapaxes(bv, -1, -2)
        gb = np.swapaxes(av, -1, -2) @ g
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return make_node(av @ bv, (a, b), bw)


@register_op("sum")
def sum_(a, axis=None, keepdims=False) -> Var:
    a = as_var(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_node(out, (a,), bw)


def mean(a, axis=None, keepdims=False) -> Var:
    a = as_var(a)
    if axis is None:
        n = a.value.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return sum_(a, axis=axis, keepdims=keepdims) * (1.0 / n)


@register_op("exp")
def exp(a) -> Var:
    a = as_var(a)
    out = flush_subnormal(np.exp(a.value))
    return make_node(out, (a,), lambda g: (g * out,))


@register_op("log")
def log(a) -> Var:
    a = as_var(a)
    av = a.value
    return make_node(np.log(av), (a,), lambda g: (g / av,))


@register_op("sqrt")
def sqrt(a) -> Var:
    a = as_var(a)
    out = np.sqrt(a.value)
    return make_node(out, (a,), lambda g: (g * 0.5 / out,))


@register_op("abs")
def abs_(a) -> Var:
    a = as_var(a)
    av = a.value
    return make_node(np.abs(av), (a,), lambda g: (g * np.sign(av),))


@register_op("reshape")
def reshape(a, shape) -> Var:
    a = as_var(a)
    return make_node(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


@register_op("transpose")
def transpose(a, axes=None) -> Var:
    a = as_var(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(ax % a.ndim for ax in axes)
    inv = tuple(np.argsort(axes))
    return make_node(np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inv),))


def swapaxes(a, ax1: int, ax2: int) -> Var:
    a = as_var(a)
    axes = list(range(a.ndim))
    ax1, ax2 = ax1 % a.ndim, ax2 % a.ndim
    axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
    return transpose(a, axes)


@register_op("getitem")
def getitem(a, idx) -> Var:
    a = as_var(a)

    basic = all(
        isinstance(i, (slice, int, type(Ellipsis), type(None)))
        for i in (idx if isinstance(idx, tuple) else (idx,))
    )

    def bw(g):
        out = np.zeros_like(a.value)
        if basic:
            out[idx] += g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return make_node(a.value[idx], (a,), bw)


@register_op("concat")
def concat(xs: Iterable, axis: int = 0) -> Var:
    xs = [as_var(x) for x in xs]
    out = np.concatenate([x.value for x in xs], axis=axis)
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_node(out, xs, bw)


def stack(xs: Iterable, axis: int = 0) -> Var:
    xs = [as_var(x) for x in xs]
    nd = xs[0].ndim + 1
    axis = axis % nd
    expanded = [reshape(x, x.shape[:axis] + (1,) + x.shape[axis:]) for x in xs]
    return concat(expanded, axis=axis)


def split(a, sections: int, axis: int = 0) -> list[Var]:
    a = as_var(a)
    n = a.shape[axis]
    if n % sections:
        raise ContractError(f"cannot split extent {n} into {sections} equal parts")
    step = n // sections
    out = []
    for s in range(sections):
        idx = [slice(None)] * a.ndim
        idx[axis] = slice(s * step, (s + 1) * step)
        out.append(getitem(a, tuple(idx)))
    return out


@register_op("relu")
def relu(a) -> Var:
    a = as_var(a)
    mask = a.value > 0
    return make_node(a.value * mask, (a,), lambda g: (g * mask,))
