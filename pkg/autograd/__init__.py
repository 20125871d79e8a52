"""
FFCE Segmenter - Autograd
Dense tensors, differentiable operators and gradient checking.
"""

from autograd.tensor import DEFAULT_DTYPE, Function, Parameter, Tensor, is_grad_enabled, no_grad
from autograd.ops import (
    Mode,
    as_mode,
    batchnorm2d,
    concat_channels,
    conv2d,
    dropout,
    linear,
    log,
    maxpool2d,
    pointwise,
    reduce,
    relu,
    sigmoid,
    slice_channels,
    softmax,
    softmax_channels,
    softplus,
    upsample_bilinear,
    upsample_bilinear2x,
)
from autograd.gradcheck import grad_check, relative_error

__all__ = [
    'DEFAULT_DTYPE', 'Function', 'Parameter', 'Tensor', 'is_grad_enabled', 'no_grad',
    'Mode', 'as_mode', 'batchnorm2d', 'concat_channels', 'conv2d', 'dropout', 'linear', 'log',
    'maxpool2d', 'pointwise', 'reduce', 'relu', 'sigmoid', 'slice_channels', 'softmax',
    'softmax_channels', 'softplus', 'upsample_bilinear', 'upsample_bilinear2x',
    'grad_check', 'relative_error',
]
