"""
FFCE Segmenter - Network
Architecture configuration, parameters, blocks and the full forward pass.
"""

from network.config import NetworkConfig
from network.params import ModelParams, ParamScope
from network.blocks import conv_block_forward, dense_block_forward, scse_forward
from network.encoding import context_gamma, encoding_forward
from network.model import FFCEOutput, build_params, ffce_forward

__all__ = [
    'NetworkConfig', 'ModelParams', 'ParamScope',
    'conv_block_forward', 'dense_block_forward', 'scse_forward',
    'context_gamma', 'encoding_forward',
    'FFCEOutput', 'build_params', 'ffce_forward',
]
