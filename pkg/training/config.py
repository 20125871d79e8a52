"""
FFCE Segmenter - Training Configuration
Optimizer, schedule and loss weighting settings.
"""

from pydantic import BaseModel, ConfigDict, Field


class LossWeights(BaseModel):
    """Weights of the cross-entropy, Dice and semantic-encoding terms."""

    model_config = ConfigDict(frozen=True, extra='forbid')

    lambda_ce: float = Field(default=1.0, ge=0.0)
    lambda_dice: float = Field(default=1.0, ge=0.0)
    lambda_sec: float = Field(default=0.1, ge=0.0)


class TrainConfig(BaseModel):
    """SGD with momentum under a poly learning-rate schedule."""

    model_config = ConfigDict(frozen=True, extra='forbid')

    base_lr: float = Field(default=0.01, gt=0.0)
    poly_power: float = Field(default=0.9, ge=0.0)
    weight_decay: float = Field(default=1e-4, ge=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    batch_size: int = Field(default=4, ge=1)
    epochs: int = Field(default=100, ge=1)
    seed: int = 0
    class_weights_enabled: bool = False
    normalize: bool = False
    loss_weights: LossWeights = Field(default_factory=LossWeights)
