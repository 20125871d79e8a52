"""
FFCE Segmenter - Network Blocks
Densely connected blocks, conv blocks, and concurrent spatial/channel
squeeze-and-excitation recalibration.
"""

import logging
from typing import Optional, Union

import numpy as np

from autograd import (
    Mode,
    Tensor,
    batchnorm2d,
    concat_channels,
    conv2d,
    dropout,
    linear,
    pointwise,
    relu,
    sigmoid,
)
from network.config import CONV_BLOCK_KERNEL, DENSE_KERNEL
from network.params import ParamScope

logger = logging.getLogger(__name__)


# DRY Helper Methods

def kaiming(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    """Normal init with std sqrt(2 / fan_in)."""
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


def init_conv(scope: ParamScope, c_in: int, c_out: int, kernel: int, rng: np.random.Generator) -> None:
    scope.add_param('kernel', kaiming(rng, (c_out, c_in, kernel, kernel), c_in * kernel * kernel))
    scope.add_param('bias', np.zeros(c_out))


def init_linear(scope: ParamScope, f_in: int, f_out: int, rng: np.random.Generator) -> None:
    scope.add_param('weight', kaiming(rng, (f_out, f_in), f_in))
    scope.add_param('bias', np.zeros(f_out))


def init_batchnorm(scope: ParamScope, channels: int) -> None:
    scope.add_param('scale', np.ones(channels))
    scope.add_param('shift', np.zeros(channels))
    scope.add_buffer('running_mean', np.zeros(channels))
    scope.add_buffer('running_var', np.ones(channels))


def apply_conv(x: Tensor, scope: ParamScope) -> Tensor:
    return conv2d(x, scope['kernel'], scope['bias'])


def apply_batchnorm(x: Tensor, scope: ParamScope, mode: Union[str, Mode]) -> Tensor:
    return batchnorm2d(x, scope['scale'], scope['shift'],
                       scope.buffer('running_mean'), scope.buffer('running_var'), mode)


# sc-SE

def init_scse(scope: ParamScope, channels: int, reduction: int, rng: np.random.Generator) -> None:
    hidden = max(1, channels // reduction)
    init_linear(scope.child('fc1'), channels, hidden, rng)
    init_linear(scope.child('fc2'), hidden, channels, rng)
    init_conv(scope.child('conv'), channels, 1, 1, rng)


def scse_forward(x: Tensor, scope: ParamScope, mode: Union[str, Mode] = Mode.EVAL) -> Tensor:
    """
    Concurrent channel and spatial squeeze-and-excitation.

    The channel gate comes from the spatially pooled descriptor through a
    bottleneck MLP; the spatial gate from a 1x1 projection to one map. The two
    recalibrated maps are merged by elementwise maximum.

    Args:
        x: (N, C, H, W) feature map
        scope: parameters under fc1, fc2 and conv
        mode: unused; both gates are mode-independent

    Returns:
        (N, C, H, W) recalibrated map
    """
    n, c = x.shape[0], x.shape[1]
    squeezed = x.mean(axes=(2, 3))
    hidden = relu(linear(squeezed, scope['fc1.weight'], scope['fc1.bias']))
    channel_gate = sigmoid(linear(hidden, scope['fc2.weight'], scope['fc2.bias']))
    channel_branch = x * channel_gate.reshape(n, c, 1, 1)

    spatial_gate = sigmoid(apply_conv(x, scope.child('conv')))
    spatial_branch = x * spatial_gate
    return pointwise('maximum', channel_branch, spatial_branch)


# Dense block

def init_dense_block(scope: ParamScope, c_in: int, channels: int, reduction: int,
                     rng: np.random.Generator) -> None:
    init_batchnorm(scope.child('bn1'), c_in)
    init_conv(scope.child('conv1'), c_in, channels, DENSE_KERNEL, rng)
    init_batchnorm(scope.child('bn2'), c_in + channels)
    init_conv(scope.child('conv2'), c_in + channels, channels, DENSE_KERNEL, rng)
    init_batchnorm(scope.child('bn3'), c_in + 2 * channels)
    init_conv(scope.child('conv3'), c_in + 2 * channels, channels, 1, rng)
    init_scse(scope.child('scse'), channels, reduction, rng)


def dense_block_forward(x: Tensor, scope: ParamScope, mode: Union[str, Mode] = Mode.EVAL,
                        dropout_rate: float = 0.0,
                        rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    Densely connected block: two 5x5 BN-ReLU-conv layers, each reading the
    concatenation of everything before it, a 1x1 compression to the block
    width, sc-SE recalibration and dropout. Spatial extents are preserved.
    """
    first = apply_conv(relu(apply_batchnorm(x, scope.child('bn1'), mode)), scope.child('conv1'))
    joined = concat_channels(x, first)
    second = apply_conv(relu(apply_batchnorm(joined, scope.child('bn2'), mode)), scope.child('conv2'))
    joined = concat_channels(x, first, second)
    compressed = apply_conv(relu(apply_batchnorm(joined, scope.child('bn3'), mode)), scope.child('conv3'))
    out = scse_forward(compressed, scope.child('scse'), mode)
    return dropout(out, dropout_rate, mode, rng)


# Conv block (U-Net style decoder variant)

def init_conv_block(scope: ParamScope, c_in: int, channels: int, reduction: int,
                    rng: np.random.Generator) -> None:
    init_conv(scope.child('conv1'), c_in, channels, CONV_BLOCK_KERNEL, rng)
    init_batchnorm(scope.child('bn1'), channels)
    init_conv(scope.child('conv2'), channels, channels, CONV_BLOCK_KERNEL, rng)
    init_batchnorm(scope.child('bn2'), channels)
    init_scse(scope.child('scse'), channels, reduction, rng)


def conv_block_forward(x: Tensor, scope: ParamScope, mode: Union[str, Mode] = Mode.EVAL,
                       dropout_rate: float = 0.0,
                       rng: Optional[np.random.Generator] = None) -> Tensor:
    """Two 3x3 conv-BN-ReLU layers, then sc-SE and dropout."""
    out = relu(apply_batchnorm(apply_conv(x, scope.child('conv1')), scope.child('bn1'), mode))
    out = relu(apply_batchnorm(apply_conv(out, scope.child('conv2')), scope.child('bn2'), mode))
    out = scse_forward(out, scope.child('scse'), mode)
    return dropout(out, dropout_rate, mode, rng)
