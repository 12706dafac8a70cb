"""Finite-difference certification of every registered differentiable op and the composite layers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import autograd as ag
from ..autograd.engine import OP_REGISTRY, Var
from ..autograd.gradcheck import GradCheckReport, grad_check
from ..qnn import functional as F
from ..qnn.layers import QFC, QConv, QLayerNorm
from ..qnn.losses import cross_entropy, orthogonal_loss
from ..ortho import OrthoHead, ToyBackbone, build_quaternion, decompose
from ..qvit import QCFFN, QMHSA, QViT, QViTBlock, QViTConfig

__all__ = ["Case", "CASES", "OP_CASES", "run_case", "run_suite"]

OP_TOL = 1e-4
BLOCK_TOL = 1e-3
OP_STEP = 1e-5


@dataclass(frozen=True)
class Case:
    name: str
    build: Callable[[np.random.Generator], tuple[Callable[[], Var], dict[str, Var]]]
    tol: float = OP_TOL
    step: float = OP_STEP


def _leaf(rng, *shape, low=None, high=None, name=None) -> Var:
    if low is None:
        v = rng.normal(size=shape)
    else:
        v = rng.uniform(low, high, size=shape)
    return Var(v, requires_grad=True, name=name)


def _project(out: Var, rng) -> Callable[[Var], Var]:
    # fixed random readout so every output element carries a distinct, O(1) weight
    R = rng.normal(size=out.shape)
    return lambda o: (o * R).sum()


def _unary(fn, *shape, low=None, high=None):
    def build(rng):
        x = _leaf(rng, *shape, low=low, high=high)
        proj = _project(fn(x), rng)
        return (lambda: proj(fn(x))), {"x": x}

    return build


def _binary(fn, sa, sb, low=None, high=None):
    def build(rng):
        a = _leaf(rng, *sa)
        b = _leaf(rng, *sb, low=low, high=high)
        proj = _project(fn(a, b), rng)
        return (lambda: proj(fn(a, b))), {"a": a, "b": b}

    return build


def _layer(make, in_shape):
    def build(rng):
        layer = make(rng)
        x = _leaf(rng, *in_shape)
        proj = _project(layer(x), rng)
        params = {"input": x, **dict(layer.named_parameters())}
        return (lambda: proj(layer(x))), params

    return build


def _away_from_zero(rng, *shape):
    return Var(rng.uniform(0.2, 1.5, size=shape) * rng.choice([-1.0, 1.0], size=shape), requires_grad=True)


def _abs_case(rng):
    x = _away_from_zero(rng, 3, 4)
    proj = _project(ag.abs_(x), rng)
    return (lambda: proj(ag.abs_(x))), {"x": x}


def _relu_case(rng):
    x = _away_from_zero(rng, 3, 4)
    proj = _project(ag.relu(x), rng)
    return (lambda: proj(ag.relu(x))), {"x": x}


def _layer_norm_case(rng):
    x, g, b = _leaf(rng, 3, 6), _leaf(rng, 6), _leaf(rng, 6)
    proj = _project(F.layer_norm(x, g, b), rng)
    return (lambda: proj(F.layer_norm(x, g, b))), {"x": x, "gamma": g, "beta": b}


def _ce_case(rng):
    logits = _leaf(rng, 5, 7)
    labels = rng.integers(0, 7, size=5)
    return (lambda: cross_entropy(logits, labels)), {"logits": logits}


def _ortho_case(rng):
    vs = [_leaf(rng, 2, 6, name=f"v{i + 1}") for i in range(3)]
    return (lambda: orthogonal_loss(*vs)), {v.name: v for v in vs}


def _conv_case(rng):
    x, k, b = _leaf(rng, 2, 5, 5, 2), _leaf(rng, 3, 3, 2, 3), _leaf(rng, 3)
    fn = lambda: F.conv2d(x, k, b, stride=2, pad=1)
    proj = _project(fn(), rng)
    return (lambda: proj(fn())), {"x": x, "kernel": k, "bias": b}


def _getitem_case(rng):
    x = _leaf(rng, 4, 5)
    idx = (slice(1, 3), np.array([0, 2, 2]))
    proj = _project(x[idx], rng)
    return (lambda: proj(x[idx])), {"x": x}


def _concat_case(rng):
    a, b = _leaf(rng, 2, 3), _leaf(rng, 2, 4)
    fn = lambda: ag.concat([a, b], axis=1)
    proj = _project(fn(), rng)
    return (lambda: proj(fn())), {"a": a, "b": b}


def _quat_expand_case(conj):
    def build(rng):
        X = _leaf(rng, 2, 3, 4)
        fn = lambda: F.quat_expand(X, left=False, conjugate=conj) @ Var(np.ones((12, 1)))
        W = _leaf(rng, 3, 2, 4)
        fl = lambda: F.quat_expand(W, left=True)
        pr, pl = _project(fn(), rng), _project(fl(), rng)
        return (lambda: pr(fn()) + pl(fl())), {"right": X, "left": W}

    return build


def _hamilton_sum_case(rng):
    w, x = _leaf(rng, 3, 4, name="w"), _leaf(rng, 3, 4, name="x")
    return (lambda: F.qmul(w, x).sum()), {"w": w, "x": x}


def _quadratic_case(rng):
    p = _leaf(rng, 5, name="p")
    return (lambda: (p * p).sum()), {"p": p}


def _qfc_softmax_ce_case(rng):
    layer = QFC(3, 2, rng=rng)
    x = Var(rng.normal(size=(4, 3, 4)))
    labels = rng.integers(0, 8, size=4)

    def f():
        y = F.component_softmax(layer(x), axis=-1)  # softmax over the two output quaternions
        return cross_entropy(ag.reshape(y, (4, 8)), labels)

    return f, dict(layer.named_parameters())


def _qvit_tiny_cfg(**kw) -> QViTConfig:
    base = dict(H=2, W=2, C=4, embed_dim=8, heads=2, depth=1, ffn_hidden=8, mlp_hidden=4, num_classes=3)
    base.update(kw)
    return QViTConfig(**base)


def _block_case(rng):
    cfg = _qvit_tiny_cfg()
    block = QViTBlock(cfg, rng=rng)
    x = _leaf(rng, 2, 4, 8, 4)
    proj = _project(block(x), rng)
    return (lambda: proj(block(x))), {"input": x, **dict(block.named_parameters())}


def _qvit_case(rng):
    cfg = _qvit_tiny_cfg()
    model = QViT(cfg, rng=rng)
    x = Var(rng.normal(size=(2, 2, 2, 4, 4)))
    labels = rng.integers(0, 3, size=2)
    return (lambda: cross_entropy(model(x), labels)), dict(model.named_parameters())


def _qvit_two_token_case(rng):
    cfg = _qvit_tiny_cfg(C=2)
    model = QViT(cfg, rng=rng)
    x = Var(rng.normal(size=(1, 2, 2, 2, 4)))
    labels = np.array([1])
    return (lambda: cross_entropy(model(x), labels)), dict(model.named_parameters())


def _ortho_pipeline_case(rng):
    backbone = ToyBackbone(1, (2, 3, 3, 4), rng=rng)
    head = OrthoHead(4, 3, 3, rng=rng)
    x = Var(rng.normal(size=(2, 8, 8, 1)))

    def run():
        dec = decompose(backbone(x), head)
        q = build_quaternion(*dec.maps)
        return dec, q

    dec, q = run()
    R = rng.normal(size=q.shape)

    def f():
        dec, q = run()
        return (q * R).sum() * 0.1 + orthogonal_loss(*dec.vectors)

    params = {f"head.{k}": v for k, v in head.named_parameters()}
    params.update({f"backbone.{k}": v for k, v in backbone.named_parameters()})
    return f, params


# One case per registered op name; composite cases follow.
OP_CASES: dict[str, Case] = {
    "add": Case("add", _binary(ag.add, (3, 4), (4,))),
    "sub": Case("sub", _binary(ag.sub, (3, 1), (3, 4))),
    "mul": Case("mul", _binary(ag.mul, (2, 3), (2, 3))),
    "div": Case("div", _binary(ag.div, (2, 3), (2, 3), low=0.5, high=2.0)),
    "matmul": Case("matmul", _binary(ag.matmul, (2, 3, 4), (4, 5))),
    "sum": Case("sum", _unary(lambda x: x.sum(axis=1), 3, 4)),
    "exp": Case("exp", _unary(ag.exp, 3, 4)),
    "log": Case("log", _unary(ag.log, 3, 4, low=0.5, high=2.0)),
    "sqrt": Case("sqrt", _unary(ag.sqrt, 3, 4, low=0.5, high=2.0)),
    "abs": Case("abs", _abs_case),
    "reshape": Case("reshape", _unary(lambda x: ag.reshape(x, (6, 2)), 3, 4)),
    "transpose": Case("transpose", _unary(lambda x: ag.transpose(x, (2, 0, 1)), 2, 3, 4)),
    "getitem": Case("getitem", _getitem_case),
    "concat": Case("concat", _concat_case),
    "relu": Case("relu", _relu_case),
    "qmul": Case("qmul", _binary(F.qmul, (3, 4), (2, 3, 4))),
    "quat_expand": Case("quat_expand", _quat_expand_case(False)),
    "softmax": Case("softmax", _unary(lambda x: F.softmax(x, axis=0), 4, 3)),
    "log_softmax": Case("log_softmax", _unary(F.log_softmax, 3, 5)),
    "layer_norm": Case("layer_norm", _layer_norm_case),
    "gelu": Case("gelu", _unary(F.gelu, 3, 5)),
    "im2col": Case("im2col", _unary(lambda x: F.im2col(x, 3, 2, stride=2, pad=1), 2, 5, 6, 2)),
    "cross_entropy": Case("cross_entropy", _ce_case),
}

CASES: list[Case] = [
    *OP_CASES.values(),
    Case("quadratic", _quadratic_case),
    Case("hamilton_sum", _hamilton_sum_case),
    Case("quat_expand_conjugate", _quat_expand_case(True)),
    Case("qmatmul", _binary(F.qmatmul, (2, 3, 2, 4), (2, 4, 4))),
    Case("qmatmul_conjugate", _binary(lambda a, b: F.qmatmul(a, b, conjugate_right=True), (3, 2, 4), (2, 2, 4))),
    Case("component_softmax", _unary(lambda x: F.component_softmax(x, axis=0), 4, 3, 4)),
    Case("gap", _unary(F.gap, 2, 3, 3, 4)),
    Case("conv2d", _conv_case),
    Case("orthogonal_loss", _ortho_case),
    Case("qfc_softmax_ce", _qfc_softmax_ce_case),
    Case("QFC", _layer(lambda rng: QFC(3, 5, rng=rng), (3, 3, 4))),
    Case("QConv3x3", _layer(lambda rng: QConv(2, 3, 3, stride=1, padding=1, rng=rng), (1, 4, 4, 2, 4))),
    Case("QConv1x1", _layer(lambda rng: QConv(3, 2, 1, rng=rng), (1, 2, 2, 3, 4))),
    Case("QLayerNorm", _layer(lambda rng: QLayerNorm(3), (2, 3, 4))),
    Case("QMHSA", _layer(lambda rng: QMHSA(8, 2, rng=rng), (2, 3, 8, 4))),
    Case("QCFFN", _layer(lambda rng: QCFFN(4, 6, 2, rng=rng), (2, 3, 4, 4))),
    Case("ortho_pipeline", _ortho_pipeline_case),
    Case("QViTBlock", _block_case, tol=BLOCK_TOL),
    Case("QViT_two_tokens", _qvit_two_token_case, tol=BLOCK_TOL),
    Case("QViT", _qvit_case, tol=BLOCK_TOL),
]


def run_case(case: Case, seed: int = 0) -> GradCheckReport:
    f, params = case.build(np.random.default_rng(seed))
    return grad_check(f, params, step=case.step, tol=case.tol)


def run_suite(seed: int = 0, names=None, emit: Callable[[str], None] | None = None) -> dict[str, GradCheckReport]:
    missing = set(OP_REGISTRY) - set(OP_CASES)
    if missing:
        raise RuntimeError(f"registered ops without a certification case: {sorted(missing)}")
    out = {}
    for case in CASES:
        if names and case.name not in names:
            continue
        rep = run_case(case, seed)
        out[case.name] = rep
        if emit:
            for line in rep.lines(prefix=f"{case.name}/"):
                emit(line)
    return out
