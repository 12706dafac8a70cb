"""Differentiable quaternion and real neural-network operations.

Quaternion activations carry their components on the last axis. Weights sit
on the left of every Hamilton product: ``out = W (x) x``.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from ..autograd.engine import (
    ContractError,
    Var,
    add,
    as_var,
    flush_subnormal,
    make_node,
    matmul,
    register_op,
    reshape,
    unbroadcast,
)
from ..qcore import HAMILTON_TERMS, DimensionError

__all__ = [
    "qmul",
    "qmatmul",
    "quat_expand",
    "qfc_matrix",
    "qlinear",
    "linear",
    "softmax",
    "component_softmax",
    "log_softmax",
    "layer_norm",
    "gelu",
    "im2col",
    "conv2d",
    "qconv2d",
    "gap",
]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _check_quat(x: Var, name: str):
    if x.ndim == 0 or x.shape[-1] != 4:
        raise DimensionError(f"{name} must have a trailing component axis of 4, got shape {x.shape}")


@register_op("qmul")
def qmul(a, b) -> Var:
    """Elementwise Hamilton product with broadcasting."""
    a, b = as_var(a), as_var(b)
    _check_quat(a, "qmul left operand")
    _check_quat(b, "qmul right operand")
    av, bv = a.value, b.value
    shape = np.broadcast_shapes(av.shape, bv.shape)
    out = np.zeros(shape, dtype=np.result_type(av, bv))
    for ca, cb, co, sign in HAMILTON_TERMS:
        out[..., co] += sign * (av[..., ca] * bv[..., cb])

    def bw(g):
        ga = np.zeros(shape, dtype=g.dtype)
        gb = np.zeros(shape, dtype=g.dtype)
        for ca, cb, co, sign in HAMILTON_TERMS:
            ga[..., ca] += sign * (g[..., co] * bv[..., cb])
            gb[..., cb] += sign * (g[..., co] * av[..., ca])
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return make_node(out, (a, b), bw)


def _expand(X: np.ndarray, left: bool, signs=(1, 1, 1, 1)) -> np.ndarray:
    """[..., n, p, 4] -> [..., n, 4, p, 4] real blocks.

    With ``left`` the block (n, p) is the transposed left-multiplication matrix
    of ``X[n, p]``; otherwise the transposed right-multiplication matrix. In
    both cases ``a_flat @ blocks`` realizes the corresponding Hamilton product
    for row vectors ``a`` laid out as (index, component).
    """
    *lead, n, p, _ = X.shape
    M = np.zeros((*lead, n, 4, p, 4), dtype=X.dtype)
    for ca, cb, co, sign in HAMILTON_TERMS:
        if left:  # out_co += sign * X_ca * a_cb
            M[..., :, cb, :, co] += (sign * signs[ca]) * X[..., ca]
        else:  # out_co += sign * a_ca * X_cb
            M[..., :, ca, :, co] += (sign * signs[cb]) * X[..., cb]
    return M


def _expand_grad(G: np.ndarray, left: bool, signs=(1, 1, 1, 1)) -> np.ndarray:
    *lead, n, _, p, _ = G.shape
    out = np.zeros((*lead, n, p, 4), dtype=G.dtype)
    for ca, cb, co, sign in HAMILTON_TERMS:
        if left:
            out[..., ca] += (sign * signs[ca]) * G[..., :, cb, :, co]
        else:
            out[..., cb] += (sign * signs[cb]) * G[..., :, ca, :, co]
    return out


@register_op("quat_expand")
def quat_expand(X, left: bool, conjugate: bool = False) -> Var:
    """Real (4n, 4p) multiplication matrix of a quaternion matrix [..., n, p, 4] (see ``_expand``)."""
    X = as_var(X)
    _check_quat(X, "quaternion matrix")
    if X.ndim < 3:
        raise DimensionError(f"expected a quaternion matrix [..., n, p, 4], got {X.shape}")
    *lead, n, p, _ = X.shape
    signs = (1, -1, -1, -1) if conjugate else (1, 1, 1, 1)
    M = _expand(X.value, left, signs).reshape(*lead, 4 * n, 4 * p)

    def bw(g):
        return (_expand_grad(g.reshape(*lead, n, 4, p, 4), left, signs),)

    return make_node(M, (X,), bw)


def qfc_matrix(W) -> Var:
    """Real (4*D_in, 4*D_out) matrix ``M`` so that ``x_flat @ M`` applies ``W[d, o] (x) x[d]``."""
    W = as_var(W)
    if W.ndim != 3 or W.shape[-1] != 4:
        raise DimensionError(f"quaternion weight must be [D_in, D_out, 4], got {W.shape}")
    return quat_expand(W, left=True)


def qmatmul(A, B, conjugate_right: bool = False) -> Var:
    """Quaternion matrix product ``C[a, c] = sum_b A[a, b] (x) B[b, c]`` over the last two logical axes.

    Leading axes broadcast. ``B`` is expanded into its real right-multiplication
    form so the whole product is a single real matmul.
    """
    A, B = as_var(A), as_var(B)
    _check_quat(A, "qmatmul left operand")
    _check_quat(B, "qmatmul right operand")
    if A.ndim < 3 or B.ndim < 3 or A.shape[-2] != B.shape[-3]:
        raise DimensionError(
            f"cannot multiply quaternion matrices of shapes {A.shape[:-1]} and {B.shape[:-1]}"
        )
    m, n = A.shape[-3], A.shape[-2]
    p = B.shape[-2]
    flat = reshape(A, A.shape[:-3] + (m, 4 * n))
    out = matmul(flat, quat_expand(B, left=False, conjugate=conjugate_right))
    return reshape(out, out.shape[:-2] + (m, p, 4))


def qlinear(x, W, b=None) -> Var:
    """Quaternion fully-connected map ``out[..., o] = b[o] + sum_d W[d, o] (x) x[..., d]``."""
    x, W = as_var(x), as_var(W)
    _check_quat(x, "QFC input")
    if x.ndim < 2 or x.shape[-2] != W.shape[0]:
        raise DimensionError(f"QFC input width {x.shape[-2:-1]} does not match weight {W.shape}")
    lead = x.shape[:-2]
    dout = W.shape[1]
    # fold every leading axis into rows so the weight gradient is a single matmul
    flat = reshape(x, (-1, 4 * W.shape[0]))
    out = matmul(flat, qfc_matrix(W))
    out = reshape(out, lead + (dout, 4))
    if b is not None:
        out = add(out, b)
    return out


def linear(x, W, b=None) -> Var:
    """Real affine map on the last axis: ``x @ W + b`` with ``W`` of shape [D_in, D_out]."""
    x, W = as_var(x), as_var(W)
    if x.shape[-1] != W.shape[0]:
        raise DimensionError(f"linear input width {x.shape[-1]} does not match weight {W.shape}")
    lead = x.shape[:-1]
    flat = x if x.ndim == 2 else reshape(x, (-1, x.shape[-1]))
    out = matmul(flat, W)
    if x.ndim != 2:
        out = reshape(out, lead + (W.shape[1],))
    if b is not None:
        out = add(out, b)
    return out


@register_op("softmax")
def softmax(x, axis: int = -1) -> Var:
    x = as_var(x)
    z = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = flush_subnormal(e / e.sum(axis=axis, keepdims=True))

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_node(y, (x,), bw)


def component_softmax(x, axis: int = -1) -> Var:
    """Softmax applied independently to each quaternion component along logical ``axis``."""
    x = as_var(x)
    _check_quat(x, "component_softmax input")
    nd = x.ndim - 1
    if not -nd <= axis < nd:
        raise DimensionError(f"axis {axis} out of range for logical rank {nd}")
    return softmax(x, axis=axis % nd)


@register_op("log_softmax")
def log_softmax(x, axis: int = -1) -> Var:
    x = as_var(x)
    z = x.value - x.value.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse

    def bw(g):
        return (g - flush_subnormal(np.exp(y)) * g.sum(axis=axis, keepdims=True),)

    return make_node(y, (x,), bw)


@register_op("layer_norm")
def layer_norm(x, gamma=None, beta=None, eps: float = 1e-5) -> Var:
    """Normalize over the last axis, then apply ``gamma * xhat + beta``."""
    x = as_var(x)
    xv = x.value
    mu = xv.mean(axis=-1, keepdims=True)
    xc = xv - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    parents = [x]
    gv = bv = None
    if gamma is not None:
        gamma = as_var(gamma)
        gv = gamma.value
        parents.append(gamma)
    if beta is not None:
        beta = as_var(beta)
        bv = beta.value
        parents.append(beta)
    out = xhat if gv is None else xhat * gv
    if bv is not None:
        out = out + bv

    def bw(g):
        gx_hat = g if gv is None else g * gv
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        grads = [gx]
        if gamma is not None:
            grads.append(unbroadcast(g * xhat, gamma.shape))
        if beta is not None:
            grads.append(unbroadcast(g, beta.shape))
        return grads

    return make_node(out, parents, bw)


@register_op("gelu")
def gelu(x) -> Var:
    """Exact GELU ``x * Phi(x)``, elementwise."""
    x = as_var(x)
    xv = x.value
    cdf = flush_subnormal(0.5 * (1.0 + erf(xv / _SQRT2)))
    out = xv * cdf

    def bw(g):
        pdf = flush_subnormal(_INV_SQRT_2PI * np.exp(-0.5 * xv * xv))
        return (g * (cdf + xv * pdf),)

    return make_node(out.astype(xv.dtype, copy=False), (x,), bw)


def _conv_geometry(h, w, kh, kw, stride, pad):
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError(
            f"kernel {kh}x{kw} (stride {stride}, padding {pad}) does not fit input {h}x{w}"
        )
    return ho, wo


@register_op("im2col")
def im2col(x, kh: int, kw: int, stride: int = 1, pad: int = 0) -> Var:
    """[B, H, W, C] -> [B, H', W', kh*kw*C] patches ordered (kernel row, kernel col, channel)."""
    x = as_var(x)
    if x.ndim != 4:
        raise DimensionError(f"im2col expects [B, H, W, C], got {x.shape}")
    B, H, W, C = x.shape
    ho, wo = _conv_geometry(H, W, kh, kw, stride, pad)
    xp = np.pad(x.value, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x.value
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # [B, H", W", C, kh, kw]
    win = win[:, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(B, ho, wo, kh * kw * C)

    def bw(g):
        g = g.reshape(B, ho, wo, kh, kw, C)
        gp = np.zeros(xp.shape, dtype=g.dtype)
        for p in range(kh):
            for q in range(kw):
                gp[:, p : p + stride * ho : stride, q : q + stride * wo : stride, :] += g[:, :, :, p, q, :]
        if pad:
            gp = gp[:, pad:-pad, pad:-pad, :]
        return (gp,)

    return make_node(cols, (x,), bw)


def conv2d(x, kernel, b=None, stride: int = 1, pad: int = 0) -> Var:
    """Real cross-correlation, NHWC input and kernel [kh, kw, C_in, C_out]."""
    x, kernel = as_var(x), as_var(kernel)
    kh, kw, cin, cout = kernel.shape
    if x.ndim != 4 or x.shape[-1] != cin:
        raise DimensionError(f"conv2d input {x.shape} does not match kernel {kernel.shape}")
    if kh == kw == 1 and stride == 1 and pad == 0:
        cols = x
    else:
        cols = im2col(x, kh, kw, stride, pad)
    return linear(cols, reshape(kernel, (kh * kw * cin, cout)), b)


def qconv2d(x, kernel, b=None, stride: int = 1, pad: int = 0) -> Var:
    """Quaternion cross-correlation; every scalar multiply is a Hamilton product.

    ``x`` is [B, H, W, C_in, 4] and ``kernel`` is [kh, kw, C_in, C_out, 4].
    """
    x, kernel = as_var(x), as_var(kernel)
    _check_quat(x, "QConv input")
    kh, kw, cin, cout, _ = kernel.shape
    if x.ndim != 5 or x.shape[-2] != cin:
        raise DimensionError(f"QConv input {x.shape} does not match kernel {kernel.shape}")
    W = reshape(kernel, (kh * kw * cin, cout, 4))
    if kh == kw == 1 and stride == 1 and pad == 0:
        return qlinear(x, W, b)
    B, H, Wd = x.shape[:3]
    cols = im2col(reshape(x, (B, H, Wd, cin * 4)), kh, kw, stride, pad)
    cols = reshape(cols, cols.shape[:3] + (kh * kw * cin, 4))
    return qlinear(cols, W, b)


def gap(x) -> Var:
    """Global average pooling of [..., H, W, C] to [..., C]."""
    x = as_var(x)
    if x.ndim < 3:
        raise DimensionError(f"gap expects [..., H, W, C], got {x.shape}")
    h, w = x.shape[-3], x.shape[-2]
    return x.sum(axis=(-3, -2)) / float(h * w)


def check_labels(labels, k: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.dtype.kind not in "iu":
        raise ContractError(f"labels must be a 1-D integer array, got {labels.dtype} {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ContractError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    return labels
