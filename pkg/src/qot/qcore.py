"""Quaternion scalar and tensor algebra on plain numpy arrays.

A quaternion array is any ndarray whose last axis has extent 4, holding the
components in (r, i, j, k) order. Every function here is pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DimensionError",
    "Quaternion",
    "HAMILTON_TERMS",
    "BASIS_MATRICES",
    "check_quat",
    "components",
    "from_components",
    "hamilton",
    "left_matrix",
    "block_matrix",
    "quat_matmul",
    "conjugate",
    "component_map",
    "quat_transpose",
    "add",
    "sub",
    "scale",
    "reshape",
    "concat",
    "split",
    "norm",
]


class DimensionError(ValueError):
    """Raised when array extents are incompatible with an operation."""


@dataclass(frozen=True)
class Quaternion:
    r: float
    i: float = 0.0
    j: float = 0.0
    k: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite([self.r, self.i, self.j, self.k])):
            raise ValueError(f"non-finite quaternion component in {self!r}")

    def as_array(self, dtype=np.float64) -> np.ndarray:
        return np.array([self.r, self.i, self.j, self.k], dtype=dtype)

    @classmethod
    def from_array(cls, a) -> "Quaternion":
        a = np.asarray(a, dtype=np.float64)
        if a.shape != (4,):
            raise DimensionError(f"expected shape (4,), got {a.shape}")
        return cls(*(float(x) for x in a))

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion.from_array(hamilton(self.as_array(), other.as_array()))

    def __add__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion.from_array(self.as_array() + other.as_array())

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.r, -self.i, -self.j, -self.k)

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.r, -self.i, -self.j, -self.k)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


# (a_component, b_component, out_component, sign): the 16 signed terms of a (x) b.
HAMILTON_TERMS: tuple[tuple[int, int, int, int], ...] = (
    (0, 0, 0, 1), (1, 1, 0, -1), (2, 2, 0, -1), (3, 3, 0, -1),
    (0, 1, 1, 1), (1, 0, 1, 1), (2, 3, 1, 1), (3, 2, 1, -1),
    (0, 2, 2, 1), (1, 3, 2, -1), (2, 0, 2, 1), (3, 1, 2, 1),
    (0, 3, 3, 1), (1, 2, 3, 1), (2, 1, 3, -1), (3, 0, 3, 1),
)


def _basis_matrices() -> np.ndarray:
    # E[c] is the left-multiplication matrix of the c-th basis quaternion, so
    # left_matrix(q) = sum_c q_c E[c].
    E = np.zeros((4, 4, 4))
    for a, b, out, sign in HAMILTON_TERMS:
        E[a, out, b] = sign
    return E


BASIS_MATRICES = _basis_matrices()
BASIS_MATRICES.setflags(write=False)


def check_quat(q, name: str = "quaternion array") -> np.ndarray:
    q = np.asarray(q)
    if q.ndim == 0 or q.shape[-1] != 4:
        raise DimensionError(f"{name} must have a trailing component axis of 4, got shape {q.shape}")
    return q


def components(q) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    q = check_quat(q)
    return q[..., 0], q[..., 1], q[..., 2], q[..., 3]


def from_components(r, i, j, k) -> np.ndarray:
    return np.stack(np.broadcast_arrays(r, i, j, k), axis=-1)


def hamilton(a, b) -> np.ndarray:
    """Elementwise Hamilton product ``a (x) b`` with numpy broadcasting."""
    a = check_quat(a, "left operand")
    b = check_quat(b, "right operand")
    shape = np.broadcast_shapes(a.shape, b.shape)
    out = np.zeros(shape, dtype=np.result_type(a, b))
    for ca, cb, co, sign in HAMILTON_TERMS:
        out[..., co] += sign * (a[..., ca] * b[..., cb])
    return out


def left_matrix(q) -> np.ndarray:
    """Real 4x4 matrix ``M`` with ``M @ g == hamilton(q, g)``; batches over leading axes."""
    q = check_quat(q)
    r, i, j, k = components(q)
    rows = [
        [r, -i, -j, -k],
        [i, r, -k, j],
        [j, k, r, -i],
        [k, -j, i, r],
    ]
    return np.stack([np.stack(row, axis=-1) for row in rows], axis=-2)


def block_matrix(A) -> np.ndarray:
    """Expand a quaternion matrix [m, n, 4] into its real (4m, 4n) left-multiplication form."""
    A = check_quat(A)
    if A.ndim < 3:
        raise DimensionError(f"expected a quaternion matrix [..., m, n, 4], got {A.shape}")
    *lead, m, n, _ = A.shape
    L = left_matrix(A)  # [..., m, n, 4, 4]
    return np.swapaxes(L, -3, -2).reshape(*lead, 4 * m, 4 * n)


def quat_matmul(A, B, conjugate_right: bool = False) -> np.ndarray:
    """Quaternion matrix product ``C[a, c] = sum_b A[a, b] (x) B[b, c]``.

    Leading axes broadcast like ``np.matmul``. ``conjugate_right`` conjugates
    every entry of ``B`` first (used for Hermitian-transpose attention).
    """
    A = check_quat(A, "left operand")
    B = check_quat(B, "right operand")
    if A.ndim < 3 or B.ndim < 3 or A.shape[-2] != B.shape[-3]:
        raise DimensionError(
            f"cannot multiply quaternion matrices of shapes {A.shape[:-1]} and {B.shape[:-1]}"
        )
    if conjugate_right:
        B = conjugate(B)
    outs = [0.0, 0.0, 0.0, 0.0]
    for ca, cb, co, sign in HAMILTON_TERMS:
        term = A[..., ca] @ B[..., cb]
        outs[co] = outs[co] + term if sign > 0 else outs[co] - term
    return np.stack(outs, axis=-1)


def conjugate(q) -> np.ndarray:
    q = check_quat(q)
    return q * np.array([1.0, -1.0, -1.0, -1.0], dtype=q.dtype if q.dtype.kind == "f" else None)


def component_map(f: Callable[[np.ndarray], np.ndarray], q) -> np.ndarray:
    """Apply a real scalar function independently to each of the four components."""
    q = check_quat(q)
    return from_components(*(f(c) for c in components(q)))


def quat_transpose(q, axes: Sequence[int] | None = None) -> np.ndarray:
    """Transpose the logical (non-component) axes, keeping components last."""
    q = check_quat(q)
    nd = q.ndim - 1
    axes = tuple(reversed(range(nd))) if axes is None else tuple(a % nd for a in axes)
    return np.transpose(q, axes + (nd,))


def _same_shape(a, b):
    if np.shape(a) != np.shape(b):
        raise DimensionError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def add(a, b) -> np.ndarray:
    _same_shape(a, b)
    return np.asarray(a) + np.asarray(b)


def sub(a, b) -> np.ndarray:
    _same_shape(a, b)
    return np.asarray(a) - np.asarray(b)


def scale(q, s: float) -> np.ndarray:
    return np.asarray(q) * s


def reshape(q, logical_shape: Sequence[int]) -> np.ndarray:
    q = check_quat(q)
    return q.reshape(*logical_shape, 4)


def concat(qs: Sequence[np.ndarray], axis: int = 0) -> np.ndarray:
    qs = [check_quat(q) for q in qs]
    nd = qs[0].ndim - 1
    axis = axis % nd
    for q in qs[1:]:
        if q.ndim != qs[0].ndim or any(
            q.shape[d] != qs[0].shape[d] for d in range(q.ndim) if d != axis
        ):
            raise DimensionError(f"cannot concatenate {qs[0].shape} and {q.shape} on axis {axis}")
    return np.concatenate(qs, axis=axis)


def split(q, sections: int | Sequence[int], axis: int = 0) -> list[np.ndarray]:
    q = check_quat(q)
    axis = axis % (q.ndim - 1)
    return np.split(q, sections, axis=axis)


def norm(q) -> np.ndarray:
    return np.sqrt(np.sum(np.square(check_quat(q)), axis=-1))
