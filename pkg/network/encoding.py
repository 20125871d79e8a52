"""
FFCE Segmenter - Context Encoding
Codeword encoding layer producing a global semantic vector, and the
per-class scaling factor predicted from it.
"""

import logging
from typing import Tuple

import numpy as np

from autograd import Tensor, linear, pointwise, relu, sigmoid, softmax
from network.blocks import kaiming
from network.params import ParamScope

logger = logging.getLogger(__name__)

SMOOTHING_FLOOR = 1e-6


def init_encoding(scope: ParamScope, channels: int, codewords: int, rng: np.random.Generator) -> None:
    """Codewords uniform in +-1/sqrt(K); smoothing factors uniform in (0, 1] through a log."""
    bound = 1.0 / np.sqrt(codewords)
    scope.add_param('codewords', rng.uniform(-bound, bound, size=(codewords, channels)))
    smoothing = np.clip(rng.uniform(0.0, 1.0, size=codewords), SMOOTHING_FLOOR, 1.0)
    scope.add_param('smoothing_raw', np.log(smoothing))


def init_context(scope: ParamScope, channels: int, num_classes: int, rng: np.random.Generator) -> None:
    scope.add_param('fc.weight', kaiming(rng, (num_classes, channels), channels))
    scope.add_param('fc.bias', np.zeros(num_classes))


def encoding_forward(feature: Tensor, scope: ParamScope) -> Tensor:
    """
    Aggregate the H*W descriptors of each map against K learned codewords.

    Residuals r_ik = x_i - d_k are softly assigned with weights
    softmax_k(-s_k * |r_ik|^2), summed over positions per codeword, averaged over
    codewords and passed through relu.

    Args:
        feature: (N, C, H, W) map
        scope: parameters 'codewords' (K, C) and 'smoothing_raw' (K,), s = exp(raw)

    Returns:
        (N, C) encoding; invariant to any permutation of spatial positions
    """
    n, c, h, w = feature.shape
    codewords = scope['codewords']
    k = codewords.shape[0]

    descriptors = feature.reshape(n, 1, c, h * w)
    residuals = descriptors - codewords.reshape(1, k, c, 1)                 # N, K, C, P
    distances = (residuals * residuals).sum(axes=2, keepdims=True)          # N, K, 1, P
    smoothing = pointwise('exp', scope['smoothing_raw']).reshape(1, k, 1, 1)
    assignment = softmax(-(smoothing * distances), axis=1)                  # N, K, 1, P
    aggregated = (assignment * residuals).sum(axes=3)                       # N, K, C
    return relu(aggregated.mean(axes=1))


def context_gamma(encoding: Tensor, scope: ParamScope) -> Tuple[Tensor, Tensor]:
    """
    Per-class scaling factor gamma = sigmoid(W e + b).

    Returns:
        (gamma, sec_logits), both (N, L); the logits feed the semantic
        encoding classification loss
    """
    sec_logits = linear(encoding, scope['fc.weight'], scope['fc.bias'])
    return sigmoid(sec_logits), sec_logits
