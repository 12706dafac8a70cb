"""Parameter and FLOP accounting for the transformer classifiers.

FLOP convention (per sample, forward pass only):

* one Hamilton product = 16 multiplies + 12 adds = 28 FLOPs
* one quaternion add = 4 FLOPs
* one real multiply-accumulate = 2 FLOPs; a real bias add = 1 FLOP
* softmax = 4 FLOPs per element (max-subtract, exp, accumulate, divide)
* GELU = 5 FLOPs per element (scale, erf, add, halve, multiply)
* LayerNorm = 7 FLOPs per element (accumulate, subtract, square, accumulate,
  normalize, scale, shift) + 3 per normalized row (eps add, sqrt, reciprocal)
* elementwise add / scale = 1 FLOP per real element
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

from ..qnn.layers import Module
from ..qvit import QViT, QViTConfig, RealViT

__all__ = [
    "HAMILTON_FLOPS",
    "QADD_FLOPS",
    "MAC_FLOPS",
    "CONVENTION",
    "CostReport",
    "count_params",
    "count_flops",
    "qfc_flops",
    "linear_flops",
    "qmatmul_flops",
    "qfc_params",
    "linear_params",
    "qvit_closed_form_params",
]

HAMILTON_FLOPS = 28
QADD_FLOPS = 4
MAC_FLOPS = 2
SOFTMAX_FLOPS = 4
GELU_FLOPS = 5
LN_ELEM_FLOPS = 7
LN_ROW_FLOPS = 3

CONVENTION = (
    "FLOPs per sample, forward only: Hamilton product = 28 (16 mul + 12 add), quaternion add = 4, "
    "real MAC = 2, bias add = 1, softmax = 4/elem, GELU = 5/elem (erf = 1), "
    "LayerNorm = 7/elem + 3/row (sqrt = 1, div = 1), residual add = 1/elem"
)


@dataclass
class CostReport:
    params: "OrderedDict[str, int]" = field(default_factory=OrderedDict)
    flops: "OrderedDict[str, int]" = field(default_factory=OrderedDict)
    convention: str = CONVENTION

    @property
    def total_params(self) -> int:
        return sum(self.params.values())

    @property
    def total_flops(self) -> int:
        return sum(self.flops.values())

    def add(self, layer: str, params: int = 0, flops: int = 0):
        self.params[layer] = self.params.get(layer, 0) + params
        self.flops[layer] = self.flops.get(layer, 0) + flops

    def merge(self, other: "CostReport") -> "CostReport":
        out = CostReport(convention=self.convention)
        for rep in (self, other):
            for k in rep.params.keys() | rep.flops.keys():
                out.add(k, rep.params.get(k, 0), rep.flops.get(k, 0))
        return out

    def lines(self) -> list[str]:
        names = list(OrderedDict.fromkeys([*self.params, *self.flops]))
        rows = ["layer\tparams\tflops"]
        rows += [f"{n}\t{self.params.get(n, 0)}\t{self.flops.get(n, 0)}" for n in names]
        rows.append(f"TOTAL\t{self.total_params}\t{self.total_flops}")
        return rows


# closed forms ---------------------------------------------------------------


def qfc_params(d_in: int, d_out: int, bias: bool = True) -> int:
    return 4 * d_in * d_out + (4 * d_out if bias else 0)


def linear_params(d_in: int, d_out: int, bias: bool = True) -> int:
    return d_in * d_out + (d_out if bias else 0)


def qfc_flops(tokens: int, d_in: int, d_out: int, bias: bool = True) -> int:
    per_out = d_in * HAMILTON_FLOPS + (d_in - 1) * QADD_FLOPS + (QADD_FLOPS if bias else 0)
    return tokens * d_out * per_out


def linear_flops(rows: int, d_in: int, d_out: int, bias: bool = True) -> int:
    return rows * d_out * (d_in * MAC_FLOPS + (1 if bias else 0))


def qmatmul_flops(m: int, n: int, p: int) -> int:
    return m * p * (n * HAMILTON_FLOPS + (n - 1) * QADD_FLOPS)


def _ln_flops(rows: int, width: int) -> int:
    return rows * (width * LN_ELEM_FLOPS + LN_ROW_FLOPS)


def qvit_closed_form_params(cfg: QViTConfig) -> int:
    """Hand-summed parameter total of :class:`QViT` (independent of module introspection)."""
    T, E, d, h = cfg.tokens, cfg.embed_dim, cfg.head_dim, cfg.heads
    total = 4 * cfg.C * cfg.token_dim  # position embedding
    total += qfc_params(cfg.token_dim, E)
    widths = [E] + [cfg.ffn_hidden] * (cfg.ffn_convs - 1) + [E]
    block = 2 * h * qfc_params(E, d) + h * qfc_params(E, d, bias=False) + qfc_params(h * d, E) + 2 * 4 * E
    block += sum(qfc_params(widths[i], widths[i + 1]) for i in range(cfg.ffn_convs))
    block += sum(2 * 4 * w for w in widths[1:-1])
    total += cfg.depth * block
    total += 2 * 4 * E
    mlp = [T * E] + [cfg.mlp_hidden] * cfg.mlp_layers
    total += sum(qfc_params(mlp[i], mlp[i + 1]) for i in range(cfg.mlp_layers))
    total += linear_params(4 * cfg.mlp_hidden, cfg.num_classes)
    return total


# model walkers ----------------------------------------------------------------


def count_params(model: Module, depth: int | None = None) -> CostReport:
    """Real trainable scalars grouped by owning layer (``depth`` truncates the dotted path)."""
    rep = CostReport()
    for name, p in model.named_parameters():
        parts = name.split(".")[:-1] or [name]
        if depth is not None:
            parts = parts[:depth]
        rep.add(".".join(parts), params=p.value.size)
    return rep


def _check_input(cfg: QViTConfig, input_shape):
    shape = tuple(input_shape)
    if len(shape) == 5:
        shape = shape[1:]
    if shape != (cfg.H, cfg.W, cfg.C, 4):
        raise ValueError(f"input shape {tuple(input_shape)} does not match config {(cfg.H, cfg.W, cfg.C, 4)}")


def count_flops(model: Module, input_shape=None) -> CostReport:
    """Per-layer FLOPs of one forward pass for one sample (see module docstring)."""
    cfg = model.cfg
    if input_shape is not None:
        _check_input(cfg, input_shape)
    if isinstance(model, QViT):
        return _qvit_flops(cfg)
    if isinstance(model, RealViT):
        return _realvit_flops(cfg)
    raise TypeError(f"no FLOP model for {type(model).__name__}")


def _qvit_flops(cfg: QViTConfig) -> CostReport:
    rep = CostReport()
    T, E, h, d = cfg.tokens, cfg.embed_dim, cfg.heads, cfg.head_dim
    rep.add("pos_embed", flops=4 * cfg.C * cfg.token_dim)
    rep.add("input_proj", flops=qfc_flops(T, cfg.token_dim, E))
    widths = [E] + [cfg.ffn_hidden] * (cfg.ffn_convs - 1) + [E]
    for b in range(cfg.depth):
        p = f"blocks.{b}"
        rep.add(f"{p}.attn.qkv", flops=qfc_flops(T, E, 3 * h * d))
        rep.add(f"{p}.attn.scores", flops=h * (qmatmul_flops(T, d, T) + 4 * T * T))
        rep.add(f"{p}.attn.softmax", flops=h * 4 * T * T * SOFTMAX_FLOPS)
        rep.add(f"{p}.attn.weighted_sum", flops=h * qmatmul_flops(T, T, d))
        rep.add(f"{p}.attn.out", flops=qfc_flops(T, h * d, E))
        rep.add(f"{p}.residual", flops=2 * 4 * T * E)
        rep.add(f"{p}.norm", flops=_ln_flops(T, 4 * E))
        for i in range(cfg.ffn_convs):
            rep.add(f"{p}.ffn.convs.{i}", flops=qfc_flops(T, widths[i], widths[i + 1]))
        for i, w in enumerate(widths[1:-1]):
            rep.add(f"{p}.ffn.norms.{i}", flops=_ln_flops(T, 4 * w) + 4 * T * w * GELU_FLOPS)
    rep.add("final_norm", flops=4 * T * E + _ln_flops(T, 4 * E))
    mlp = [T * E] + [cfg.mlp_hidden] * cfg.mlp_layers
    for i in range(cfg.mlp_layers):
        act = 4 * mlp[i + 1] * GELU_FLOPS if i < cfg.mlp_layers - 1 else 0
        rep.add(f"mlp.{i}", flops=qfc_flops(1, mlp[i], mlp[i + 1]) + act)
    rep.add("head", flops=linear_flops(1, 4 * cfg.mlp_hidden, cfg.num_classes))
    return rep


def _realvit_flops(cfg: QViTConfig) -> CostReport:
    rep = CostReport()
    T, D, h = cfg.tokens, 4 * cfg.embed_dim, cfg.heads
    d = D // h
    rep.add("pos_embed", flops=4 * cfg.C * cfg.token_dim)
    rep.add("input_proj", flops=linear_flops(T, 4 * cfg.token_dim, D))
    widths = [D] + [4 * cfg.ffn_hidden] * (cfg.ffn_convs - 1) + [D]
    for b in range(cfg.depth):
        p = f"blocks.{b}"
        rep.add(f"{p}.attn.qkv", flops=linear_flops(T, D, 3 * D))
        rep.add(f"{p}.attn.scores", flops=h * (T * T * d * MAC_FLOPS + T * T))
        rep.add(f"{p}.attn.softmax", flops=h * T * T * SOFTMAX_FLOPS)
        rep.add(f"{p}.attn.weighted_sum", flops=h * T * d * T * MAC_FLOPS)
        rep.add(f"{p}.attn.out", flops=linear_flops(T, D, D))
        rep.add(f"{p}.residual", flops=2 * T * D)
        rep.add(f"{p}.norm", flops=_ln_flops(T, D))
        for i in range(cfg.ffn_convs):
            rep.add(f"{p}.ffn.{i}", flops=linear_flops(T, widths[i], widths[i + 1]))
        for i, w in enumerate(widths[1:-1]):
            rep.add(f"{p}.ffn_norms.{i}", flops=_ln_flops(T, w) + T * w * GELU_FLOPS)
    rep.add("final_norm", flops=T * D + _ln_flops(T, D))
    mlp = [T * D] + [4 * cfg.mlp_hidden] * cfg.mlp_layers
    for i in range(cfg.mlp_layers):
        act = mlp[i + 1] * GELU_FLOPS if i < cfg.mlp_layers - 1 else 0
        rep.add(f"mlp.{i}", flops=linear_flops(1, mlp[i], mlp[i + 1]) + act)
    rep.add("head", flops=linear_flops(1, 4 * cfg.mlp_hidden, cfg.num_classes))
    return rep
