"""Minimal reverse-mode automatic differentiation on numpy."""

from .functional import (
    batchnorm1d,
    conv1d,
    gather_logits,
    layernorm,
    linear,
    multi_head_self_attention,
    positionwise_linear,
    softmax,
    softmax_cross_entropy,
)
from .grad import input_gradient, numeric_gradient, relative_error
from .nn import (
    BatchNorm1d,
    Conv1d,
    LayerNorm,
    Linear,
    Module,
    MultiHeadSelfAttention,
    Parameter,
    ParameterSet,
    PositionwiseLinear,
    TransformerEncoderLayer,
    eval_mode,
    frozen,
)
from .optim import Adam, AdamState, adam_step
from .tensor import (
    Tensor,
    add,
    concat,
    index,
    make_result,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    sigmoid,
    sub,
    transpose,
    tsum,
)

__all__ = [name for name in dir() if not name.startswith("_")]
