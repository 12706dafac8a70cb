from . import functional
from .functional import (
    component_softmax,
    conv2d,
    gap,
    gelu,
    im2col,
    layer_norm,
    linear,
    log_softmax,
    qconv2d,
    qfc_matrix,
    qlinear,
    qmatmul,
    qmul,
    quat_expand,
    softmax,
)
from .layers import QFC, Conv2d, LayerNorm, Linear, Module, ModuleList, QConv, QLayerNorm, quat_uniform
from .losses import (
    ORTHO_PAIRS,
    DegenerateInputError,
    LossWeights,
    combined_loss,
    cross_entropy,
    orthogonal_loss,
    pairwise_abs_cosines,
)
