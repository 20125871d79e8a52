"""
FFCE Segmenter - Training
Losses, optimizer, configuration and the training loop.
"""

from training.config import LossWeights, TrainConfig
from training.losses import (
    LossReport,
    compute_class_weights,
    composite_loss,
    multiclass_dice_loss,
    sec_loss,
    weighted_cross_entropy,
)
from training.optimizer import OptimizerState, poly_lr, sgd_step
