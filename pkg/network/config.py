"""
FFCE Segmenter - Network Configuration
Architecture hyperparameters as a validated, immutable model.
"""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

DENSE_KERNEL = 5
CONV_BLOCK_KERNEL = 3


class NetworkConfig(BaseModel):
    """Architecture of the feature-fused context-encoding network."""

    model_config = ConfigDict(frozen=True, extra='forbid')

    num_classes: int = Field(ge=1, description="L, number of label classes including background")
    stack_depth: int = Field(default=10, ge=1, description="S, planes in the depth-as-channel stack")
    channels: int = Field(default=64, ge=1, description="feature width of every block")
    num_enc_blocks: int = Field(default=4, ge=1)
    num_dec_blocks: int = Field(default=4, ge=1)
    codewords: int = Field(default=32, ge=1, description="K, encoding-layer codewords")
    dropout_rate: float = Field(default=0.1, ge=0.0, lt=1.0)
    scse_reduction: int = Field(default=2, ge=1)
    input_mode: Literal['fused', '2d'] = 'fused'
    decoder_block: Literal['dense', 'conv'] = 'dense'

    @model_validator(mode='after')
    def _check_geometry(self) -> 'NetworkConfig':
        if self.channels % self.scse_reduction:
            raise ValueError(
                f"channels ({self.channels}) must be divisible by scse_reduction ({self.scse_reduction})"
            )
        if self.num_enc_blocks % self.num_dec_blocks:
            raise ValueError(
                f"num_dec_blocks ({self.num_dec_blocks}) must divide num_enc_blocks ({self.num_enc_blocks})"
            )
        return self

    @property
    def spatial_divisor(self) -> int:
        """Input height and width must be multiples of this."""
        return 2 ** self.num_enc_blocks

    @property
    def pools_per_decoder_block(self) -> int:
        return self.num_enc_blocks // self.num_dec_blocks

    @property
    def upsample_factor(self) -> int:
        return 2 ** self.pools_per_decoder_block

    @property
    def fused(self) -> bool:
        return self.input_mode == 'fused'
