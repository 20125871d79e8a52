"""
FFCE Segmenter - Feature-Fused Context-Encoding Network
Parameter construction and the end-to-end forward pass: dual encoders,
fusion, bottleneck, context encoding, decoder, classifier and per-class
recalibration.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Union

import numpy as np

from autograd import (
    DEFAULT_DTYPE,
    Mode,
    Tensor,
    as_mode,
    concat_channels,
    conv2d,
    maxpool2d,
    softmax_channels,
    upsample_bilinear,
)
from core.error_monitor import InvalidInputError, ShapeError
from network.blocks import (
    apply_conv,
    conv_block_forward,
    dense_block_forward,
    init_conv,
    init_conv_block,
    init_dense_block,
    init_scse,
    scse_forward,
)
from network.config import NetworkConfig
from network.encoding import context_gamma, encoding_forward, init_context, init_encoding
from network.params import ModelParams

logger = logging.getLogger(__name__)


@dataclass
class FFCEOutput:
    """Outputs of one forward pass."""
    logits: Tensor          # Y = X * gamma, (N, L, H, W)
    gamma: Tensor           # (N, L)
    sec_logits: Tensor      # (N, L)
    probs: Tensor           # softmax of Y over classes
    raw_logits: Tensor      # classifier output X before recalibration

    def to_dict(self) -> dict:
        return {
            'logits_shape': list(self.logits.shape),
            'gamma': self.gamma.data.tolist(),
            'sec_logits': self.sec_logits.data.tolist(),
        }


def build_params(config: NetworkConfig, seed: int = 0, dtype: np.dtype = DEFAULT_DTYPE) -> ModelParams:
    """
    Initialize every parameter for `config`.

    Args:
        config: Network architecture
        seed: Seed for the initializer's generator
        dtype: Element type of all values

    Returns:
        Freshly initialized ModelParams
    """
    rng = np.random.default_rng(seed)
    params = ModelParams(config, dtype)
    c, r = config.channels, config.scse_reduction

    for index in range(1, config.num_enc_blocks + 1):
        init_dense_block(params.scope(f'enc2d.block{index}'), 1 if index == 1 else c, c, r, rng)
    if config.fused:
        for index in range(1, config.num_enc_blocks + 1):
            init_dense_block(params.scope(f'encspatial.block{index}'),
                             config.stack_depth if index == 1 else c, c, r, rng)

    fused_width = 2 * c if config.fused else c
    init_scse(params.scope('fusion.scse'), fused_width, r, rng)
    init_conv(params.scope('fusion.conv'), fused_width, c, 1, rng)
    init_dense_block(params.scope('bottleneck'), c, c, r, rng)

    init_encoding(params.scope('encoding'), c, config.codewords, rng)
    init_context(params.scope('context'), c, config.num_classes, rng)

    init_decoder = init_dense_block if config.decoder_block == 'dense' else init_conv_block
    for index in range(1, config.num_dec_blocks + 1):
        init_decoder(params.scope(f'dec.block{index}'), 2 * c, c, r, rng)

    init_conv(params.scope('classifier'), c, config.num_classes, 1, rng)
    logger.debug(f"Initialized {len(params)} parameters ({params.num_elements()} values) for {config.input_mode} network")
    return params


# DRY Helper Methods

def _check_inputs(slice_batch: Tensor, stack: Optional[Tensor], config: NetworkConfig) -> None:
    if slice_batch.ndim != 4 or slice_batch.shape[1] != 1:
        raise ShapeError(f"slice input must be (N, 1, H, W), got {slice_batch.shape}")
    divisor = config.spatial_divisor
    for label, extent in (('height', slice_batch.shape[2]), ('width', slice_batch.shape[3])):
        if extent % divisor:
            raise ShapeError(f"input {label} {extent} is not divisible by {divisor}")
    if not config.fused:
        return
    if stack is None:
        raise InvalidInputError("fused input mode needs a slice stack")
    expected = (slice_batch.shape[0], config.stack_depth) + slice_batch.shape[2:]
    if stack.shape != expected:
        raise ShapeError(f"stack shape {stack.shape} does not match expected {expected}")


def _encode(x: Tensor, prefix: str, params: ModelParams, config: NetworkConfig, mode: Mode,
            rng: Optional[np.random.Generator], skips: Optional[List[Tensor]] = None) -> Tensor:
    for index in range(1, config.num_enc_blocks + 1):
        x = dense_block_forward(x, params.scope(f'{prefix}.block{index}'), mode, config.dropout_rate, rng)
        if skips is not None:
            skips.append(x)
        x, _ = maxpool2d(x)
    return x


def ffce_forward(slice_batch: Tensor, stack: Optional[Tensor], params: ModelParams,
                 config: Optional[NetworkConfig] = None, mode: Union[str, Mode] = Mode.EVAL,
                 rng: Optional[np.random.Generator] = None, bypass_gamma: bool = False,
                 gamma_override: Optional[np.ndarray] = None) -> FFCEOutput:
    """
    Run the network on a batch of slices.

    Args:
        slice_batch: (N, 1, H, W) coronal slices, or (1, H, W) for a single one
        stack: (N, S, H, W) depth-as-channel stacks (ignored in 2d input mode)
        params: Network parameters
        config: Architecture; defaults to the one the parameters were built for
        mode: 'train' uses batch statistics and dropout, 'eval' is deterministic
        rng: Dropout generator, required in train mode when dropout is enabled
        bypass_gamma: Skip recalibration so the logits equal the classifier output
        gamma_override: Explicit (L,) or (N, L) scaling factor used instead of the
            predicted one

    Returns:
        FFCEOutput; unbatched inputs give unbatched outputs
    """
    config = config or params.config
    mode = as_mode(mode)

    unbatched = slice_batch.ndim == 3
    if unbatched:
        slice_batch = slice_batch.reshape((1,) + slice_batch.shape)
        if stack is not None:
            stack = stack.reshape((1,) + stack.shape)
    _check_inputs(slice_batch, stack, config)
    n, num_classes = slice_batch.shape[0], config.num_classes

    skips: List[Tensor] = []
    features = _encode(slice_batch, 'enc2d', params, config, mode, rng, skips)
    if config.fused:
        spatial = _encode(stack, 'encspatial', params, config, mode, rng)
        features = concat_channels(features, spatial)
    features = scse_forward(features, params.scope('fusion.scse'), mode)
    features = apply_conv(features, params.scope('fusion.conv'))
    features = dense_block_forward(features, params.scope('bottleneck'), mode, config.dropout_rate, rng)

    encoding = encoding_forward(features, params.scope('encoding'))
    gamma, sec_logits = context_gamma(encoding, params.scope('context'))

    decode: Callable = dense_block_forward if config.decoder_block == 'dense' else conv_block_forward
    step = config.pools_per_decoder_block
    for index in range(config.num_dec_blocks):
        features = upsample_bilinear(features, config.upsample_factor)
        skip = skips[config.num_enc_blocks - (index + 1) * step]
        features = concat_channels(features, skip)
        features = decode(features, params.scope(f'dec.block{index + 1}'), mode, config.dropout_rate, rng)

    raw_logits = conv2d(features, params['classifier.kernel'], params['classifier.bias'])

    if bypass_gamma:
        logits = raw_logits
    elif gamma_override is not None:
        override = np.broadcast_to(np.asarray(gamma_override, dtype=raw_logits.dtype), (n, num_classes))
        logits = raw_logits * Tensor(override.reshape(n, num_classes, 1, 1))
    else:
        logits = raw_logits * gamma.reshape(n, num_classes, 1, 1)
    probs = softmax_channels(logits)

    output = FFCEOutput(logits=logits, gamma=gamma, sec_logits=sec_logits, probs=probs, raw_logits=raw_logits)
    if unbatched:
        output = FFCEOutput(
            logits=logits.reshape(logits.shape[1:]),
            gamma=gamma.reshape((num_classes,)),
            sec_logits=sec_logits.reshape((num_classes,)),
            probs=probs.reshape(probs.shape[1:]),
            raw_logits=raw_logits.reshape(raw_logits.shape[1:]),
        )
    return output
