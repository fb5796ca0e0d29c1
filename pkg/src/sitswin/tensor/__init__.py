"""Dense tensors with reverse-mode differentiation."""

from sitswin.tensor.core import (
    Function,
    Graph,
    GraphEntry,
    Tensor,
    backward,
    get_default_dtype,
    is_grad_enabled,
    no_grad,
    precision,
    set_check_finite,
    set_default_dtype,
)
from sitswin.tensor.ops import (
    argmax,
    concat,
    conv3d,
    conv3d_transpose,
    cross_entropy,
    dropout,
    gelu,
    instance_norm,
    layer_norm,
    leaky_relu,
    matmul,
    rearrange,
    roll,
    softmax_last,
    take_rows,
)
from sitswin.tensor.nn import Conv3d, ConvTranspose3d, Dropout, LayerNorm, Linear, Module, Parameter
from sitswin.tensor.gradcheck import GradcheckResult, gradcheck, numerical_gradient, relative_error

__all__ = [
    "Function",
    "Graph",
    "GraphEntry",
    "Tensor",
    "backward",
    "get_default_dtype",
    "is_grad_enabled",
    "no_grad",
    "precision",
    "set_check_finite",
    "set_default_dtype",
    "argmax",
    "concat",
    "conv3d",
    "conv3d_transpose",
    "cross_entropy",
    "dropout",
    "gelu",
    "instance_norm",
    "layer_norm",
    "leaky_relu",
    "matmul",
    "rearrange",
    "roll",
    "softmax_last",
    "take_rows",
    "Conv3d",
    "ConvTranspose3d",
    "Dropout",
    "LayerNorm",
    "Linear",
    "Module",
    "Parameter",
    "GradcheckResult",
    "gradcheck",
    "numerical_gradient",
    "relative_error",
]
