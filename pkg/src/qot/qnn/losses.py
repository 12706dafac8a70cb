"""Classification and orthogonality losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autograd.engine import ContractError, Var, abs_, as_var, flush_subnormal, make_node, register_op, sqrt
from ..qcore import DimensionError
from .functional import check_labels

__all__ = [
    "DegenerateInputError",
    "LossWeights",
    "ORTHO_PAIRS",
    "cross_entropy",
    "orthogonal_loss",
    "pairwise_abs_cosines",
    "combined_loss",
]

# Unordered pairs summed by the orthogonal loss; the sum is divided by the vector count (3).
ORTHO_PAIRS: tuple[tuple[int, int], ...] = ((0, 1), (0, 2), (1, 2))


class DegenerateInputError(ValueError):
    """Raised when an input makes a loss undefined (e.g. a zero-norm vector)."""


@dataclass(frozen=True)
class LossWeights:
    lam: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be finite and non-negative, got {self.lam}")


@register_op("cross_entropy")
def cross_entropy(logits, labels) -> Var:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``; logits are [B, K]."""
    logits = as_var(logits)
    if logits.ndim != 2:
        raise DimensionError(f"logits must be [B, K], got {logits.shape}")
    B, K = logits.shape
    labels = check_labels(labels, K)
    if labels.shape[0] != B:
        raise ContractError(f"{labels.shape[0]} labels for a batch of {B}")
    z = logits.value - logits.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    rows = np.arange(B)
    loss = -logp[rows, labels].mean()

    def bw(g):
        p = flush_subnormal(np.exp(logp))
        p[rows, labels] -= 1.0
        return (p * (g / B),)

    return make_node(np.asarray(loss, dtype=logits.dtype), (logits,), bw)


def pairwise_abs_cosines(v1, v2, v3) -> list[Var]:
    """``|cos(v_a, v_b)|`` for each pair in :data:`ORTHO_PAIRS`; vectors are [..., D]."""
    vs = [as_var(v) for v in (v1, v2, v3)]
    shape = vs[0].shape
    for v in vs[1:]:
        if v.shape != shape:
            raise DimensionError(f"orthogonal loss vectors differ in shape: {shape} vs {v.shape}")
    norms = []
    for idx, v in enumerate(vs):
        sq = (v * v).sum(axis=-1)
        if np.any(sq.value == 0.0):
            raise DegenerateInputError(f"vector v{idx + 1} has zero L2 norm")
        norms.append(sqrt(sq))
    return [abs_((vs[a] * vs[b]).sum(axis=-1) / (norms[a] * norms[b])) for a, b in ORTHO_PAIRS]


def orthogonal_loss(v1, v2, v3) -> Var:
    """Sum of absolute pairwise cosine similarities divided by the vector count.

    Leading axes are treated as a batch and averaged.
    """
    cos = pairwise_abs_cosines(v1, v2, v3)
    total = (cos[0] + cos[1] + cos[2]) * (1.0 / 3.0)
    return total.mean() if total.ndim else total


def combined_loss(ce, ortho, weights: LossWeights) -> Var:
    return as_var(ce) + as_var(ortho) * weights.lam
