"""Quaternion vision transformer over channel tokens, and its real-valued twin."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .autograd.engine import Var, add, as_var, concat, reshape, transpose
from .qcore import DimensionError
from .qnn import functional as F
from .qnn.layers import QFC, LayerNorm, Linear, Module, ModuleList, QConv, QLayerNorm

__all__ = [
    "QViTConfig",
    "channel_patch_encode",
    "QMHSA",
    "QCFFN",
    "QViTBlock",
    "QViT",
    "RealViT",
]


@dataclass(frozen=True)
class QViTConfig:
    H: int = 7
    W: int = 7
    C: int = 64
    embed_dim: int = 64
    heads: int = 8
    depth: int = 4  # transformer blocks
    ffn_convs: int = 2  # QConv layers inside each feed-forward network
    ffn_hidden: int = 128
    mlp_layers: int = 2  # QFC layers in the classification MLP
    mlp_hidden: int = 64
    num_classes: int = 7
    conjugate_keys: bool = False

    def __post_init__(self):
        for name in ("H", "W", "C", "embed_dim", "heads", "depth", "ffn_convs", "ffn_hidden",
                     "mlp_layers", "mlp_hidden", "num_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} is not divisible by heads {self.heads}")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @property
    def tokens(self) -> int:
        return self.C

    @property
    def token_dim(self) -> int:
        return self.H * self.W

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "QViTConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def channel_patch_encode(x, pos_embed=None) -> Var:
    """[B, H, W, C, 4] -> [B, C, H*W, 4]: one token per channel, plus the position embedding."""
    x = as_var(x)
    if x.ndim != 5 or x.shape[-1] != 4:
        raise DimensionError(f"expected quaternion features [B, H, W, C, 4], got {x.shape}")
    B, H, W, C, _ = x.shape
    seq = reshape(transpose(x, (0, 3, 1, 2, 4)), (B, C, H * W, 4))
    if pos_embed is not None:
        if pos_embed.shape != (C, H * W, 4):
            raise DimensionError(f"position embedding {pos_embed.shape} does not match sequence {(C, H * W, 4)}")
        seq = add(seq, pos_embed)
    return seq


class QMHSA(Module):
    """Quaternion multi-head self-attention with per-head query/key/value QFCs."""

    def __init__(self, embed_dim: int, heads: int, conjugate_keys: bool = False, rng=None, dtype=np.float64):
        if embed_dim % heads:
            raise ValueError(f"embed_dim {embed_dim} is not divisible by heads {heads}")
        self.embed_dim, self.heads = embed_dim, heads
        self.head_dim = embed_dim // heads
        self.conjugate_keys = conjugate_keys
        d = self.head_dim
        self.q = ModuleList([QFC(embed_dim, d, rng=rng, dtype=dtype) for _ in range(heads)])
        # No key bias: it adds a constant to each score row, which the softmax over keys cancels,
        # so its gradient is identically zero.
        self.k = ModuleList([QFC(embed_dim, d, bias=False, rng=rng, dtype=dtype) for _ in range(heads)])
        self.v = ModuleList([QFC(embed_dim, d, rng=rng, dtype=dtype) for _ in range(heads)])
        self.out = QFC(heads * d, embed_dim, rng=rng, dtype=dtype)

    def _fused_qkv(self):
        # Per-head projections are independent, so one wide QFC computes all of them at once.
        layers = [*self.q, *self.k, *self.v]
        W = concat([l.weight for l in layers], axis=1)
        no_key_bias = Var(np.zeros((self.heads * self.head_dim, 4), dtype=W.dtype))
        b = concat([*(l.bias for l in self.q), no_key_bias, *(l.bias for l in self.v)], axis=0)
        return W, b

    def attention(self, x) -> tuple[Var, Var]:
        """Return (head outputs [B, heads, T, d, 4], attention weights [B, heads, T, T, 4])."""
        x = as_var(x)
        B, T, E, _ = x.shape
        if E != self.embed_dim:
            raise DimensionError(f"QMHSA({self.embed_dim}) got token width {E}")
        h, d = self.heads, self.head_dim
        W, b = self._fused_qkv()
        qkv = F.qlinear(x, W, b)  # [B, T, 3*h*d, 4]
        qkv = transpose(reshape(qkv, (B, T, 3, h, d, 4)), (2, 0, 3, 1, 4, 5))  # [3, B, h, T, d, 4]
        Q, K, V = qkv[0], qkv[1], qkv[2]
        Kt = transpose(K, (0, 1, 3, 2, 4))
        scores = F.qmatmul(Q, Kt, conjugate_right=self.conjugate_keys) * (1.0 / math.sqrt(d))
        attn = F.component_softmax(scores, axis=-1)
        return F.qmatmul(attn, V), attn

    def forward(self, x):
        heads, _ = self.attention(x)
        B, h, T, d, _ = heads.shape
        merged = reshape(transpose(heads, (0, 2, 1, 3, 4)), (B, T, h * d, 4))
        return self.out(merged)


class QCFFN(Module):
    """Pointwise QConv -> LayerNorm -> GELU -> ... -> pointwise QConv over tokens."""

    def __init__(self, embed_dim: int, hidden: int, convs: int = 2, rng=None, dtype=np.float64):
        if convs < 1:
            raise ValueError("need at least one QConv layer")
        widths = [embed_dim] + [hidden] * (convs - 1) + [embed_dim]
        self.convs = ModuleList(
            [QConv(widths[i], widths[i + 1], 1, rng=rng, dtype=dtype) for i in range(convs)]
        )
        self.norms = ModuleList([QLayerNorm(widths[i + 1], dtype=dtype) for i in range(convs - 1)])

    def forward(self, x):
        convs = list(self.convs)
        y = convs[0].pointwise(x)
        for norm, conv in zip(self.norms, convs[1:]):
            y = conv.pointwise(F.gelu(norm(y)))
        return y


class QViTBlock(Module):
    """``y = x + QMHSA(x); X = LN(y); out = X + QCFFN(X)``."""

    def __init__(self, cfg: QViTConfig, rng=None, dtype=np.float64):
        self.attn = QMHSA(cfg.embed_dim, cfg.heads, cfg.conjugate_keys, rng=rng, dtype=dtype)
        self.norm = QLayerNorm(cfg.embed_dim, dtype=dtype)
        self.ffn = QCFFN(cfg.embed_dim, cfg.ffn_hidden, cfg.ffn_convs, rng=rng, dtype=dtype)

    def forward(self, x):
        X = self.norm(add(x, self.attn(x)))
        return add(X, self.ffn(X))


class QViT(Module):
    def __init__(self, cfg: QViTConfig, seed: int = 0, dtype=np.float64, rng=None):
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.cfg = cfg
        T, E = cfg.tokens, cfg.embed_dim
        self.pos_embed = Var(
            rng.normal(0.0, 0.02, size=(cfg.C, cfg.token_dim, 4)).astype(dtype), requires_grad=True, name="pos_embed"
        )
        self.input_proj = QFC(cfg.token_dim, E, rng=rng, dtype=dtype)
        self.blocks = ModuleList([QViTBlock(cfg, rng=rng, dtype=dtype) for _ in range(cfg.depth)])
        self.final_norm = QLayerNorm(E, dtype=dtype)
        widths = [T * E] + [cfg.mlp_hidden] * cfg.mlp_layers
        self.mlp = ModuleList([QFC(widths[i], widths[i + 1], rng=rng, dtype=dtype) for i in range(cfg.mlp_layers)])
        self.head = Linear(4 * cfg.mlp_hidden, cfg.num_classes, rng=rng, dtype=dtype)

    def encode(self, x) -> Var:
        """Channel tokens projected to the embedding width: [B, T, E, 4]."""
        return self.input_proj(channel_patch_encode(x, self.pos_embed))

    def features(self, x) -> Var:
        z0 = self.encode(x)
        z = z0
        for block in self.blocks:
            z = block(z)
        return self.final_norm(add(z, z0))

    def forward(self, x) -> Var:
        x = as_var(x)
        single = x.ndim == 4
        if single:
            x = reshape(x, (1,) + x.shape)
        cfg = self.cfg
        if x.shape[1:] != (cfg.H, cfg.W, cfg.C, 4):
            raise DimensionError(f"Q-ViT expects [B, {cfg.H}, {cfg.W}, {cfg.C}, 4], got {x.shape}")
        z = self.features(x)
        B = z.shape[0]
        z = reshape(z, (B, cfg.tokens * cfg.embed_dim, 4))  # token-major, then channel
        layers = list(self.mlp)
        for i, layer in enumerate(layers):
            z = layer(z)
            if i < len(layers) - 1:
                z = F.gelu(z)
        logits = self.head(reshape(z, (B, 4 * cfg.mlp_hidden)))
        return reshape(logits, (cfg.num_classes,)) if single else logits


class _RealAttention(Module):
    def __init__(self, width: int, heads: int, rng, dtype):
        self.width, self.heads = width, heads
        self.qkv = Linear(width, 3 * width, rng=rng, dtype=dtype)
        self.out = Linear(width, width, rng=rng, dtype=dtype)

    def forward(self, x):
        B, T, D = x.shape
        h, d = self.heads, D // self.heads
        qkv = transpose(reshape(self.qkv(x), (B, T, 3, h, d)), (2, 0, 3, 1, 4))
        Q, K, V = qkv[0], qkv[1], qkv[2]
        scores = (Q @ transpose(K, (0, 1, 3, 2))) * (1.0 / math.sqrt(d))
        heads = F.softmax(scores, axis=-1) @ V
        return self.out(reshape(transpose(heads, (0, 2, 1, 3)), (B, T, D)))


class _RealBlock(Module):
    def __init__(self, cfg: QViTConfig, rng, dtype):
        D, Hd = 4 * cfg.embed_dim, 4 * cfg.ffn_hidden
        self.attn = _RealAttention(D, cfg.heads, rng, dtype)
        self.norm = LayerNorm(D, dtype=dtype)
        widths = [D] + [Hd] * (cfg.ffn_convs - 1) + [D]
        self.ffn = ModuleList([Linear(widths[i], widths[i + 1], rng=rng, dtype=dtype) for i in range(cfg.ffn_convs)])
        self.ffn_norms = ModuleList([LayerNorm(widths[i + 1], dtype=dtype) for i in range(cfg.ffn_convs - 1)])

    def forward(self, x):
        X = self.norm(add(x, self.attn(x)))
        layers = list(self.ffn)
        y = layers[0](X)
        for norm, layer in zip(self.ffn_norms, layers[1:]):
            y = layer(F.gelu(norm(y)))
        return add(X, y)


class RealViT(Module):
    """The same architecture with every quaternion width ``w`` replaced by ``4w`` reals.

    Consumes the same [B, H, W, C, 4] input, flattening each channel's quaternions
    into one real token. Used as the parameter-count baseline.
    """

    def __init__(self, cfg: QViTConfig, seed: int = 0, dtype=np.float64, rng=None):
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.cfg = cfg
        T, D = cfg.tokens, 4 * cfg.embed_dim
        self.pos_embed = Var(
            rng.normal(0.0, 0.02, size=(cfg.C, 4 * cfg.token_dim)).astype(dtype), requires_grad=True, name="pos_embed"
        )
        self.input_proj = Linear(4 * cfg.token_dim, D, rng=rng, dtype=dtype)
        self.blocks = ModuleList([_RealBlock(cfg, rng, dtype) for _ in range(cfg.depth)])
        self.final_norm = LayerNorm(D, dtype=dtype)
        widths = [T * D] + [4 * cfg.mlp_hidden] * cfg.mlp_layers
        self.mlp = ModuleList([Linear(widths[i], widths[i + 1], rng=rng, dtype=dtype) for i in range(cfg.mlp_layers)])
        self.head = Linear(4 * cfg.mlp_hidden, cfg.num_classes, rng=rng, dtype=dtype)

    def forward(self, x):
        x = as_var(x)
        cfg = self.cfg
        B = x.shape[0]
        seq = reshape(channel_patch_encode(x), (B, cfg.C, 4 * cfg.token_dim))
        z0 = self.input_proj(add(seq, self.pos_embed))
        z = z0
        for block in self.blocks:
            z = block(z)
        z = reshape(self.final_norm(add(z, z0)), (B, -1))
        layers = list(self.mlp)
        for i, layer in enumerate(layers):
            z = layer(z)
            if i < len(layers) - 1:
                z = F.gelu(z)
        return self.head(z)
