"""
FFCE Segmenter - Segmentation Losses
Class-weighted cross-entropy, multi-class Dice, semantic-encoding
classification loss, their weighted composite, and class-balancing weights.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from autograd import Tensor, log, softplus
from core.error_monitor import InvalidInputError, ShapeError
from network.model import FFCEOutput
from training.config import LossWeights

logger = logging.getLogger(__name__)

DICE_EPSILON = 1e-7


@dataclass
class LossReport:
    """Composite loss for one batch; `total` stays attached to the graph."""
    total: Tensor
    ce: float
    dice: float
    sec: float

    @property
    def total_value(self) -> float:
        return self.total.item()

    def to_dict(self) -> dict:
        return {'total': self.total_value, 'ce': self.ce, 'dice': self.dice, 'sec': self.sec}


# DRY Helper Methods

def _batched(probs: Tensor, gt: np.ndarray):
    """Add a batch axis to an unbatched (L, H, W) / (H, W) pair."""
    gt = np.asarray(gt)
    if probs.ndim == 3:
        probs = probs.reshape((1,) + probs.shape)
        gt = gt[None]
    return probs, gt


def _check_labels(gt: np.ndarray, num_classes: int) -> None:
    if gt.size and (gt.min() < 0 or gt.max() >= num_classes):
        raise InvalidInputError(f"ground-truth labels must lie in [0, {num_classes}), got max {gt.max()}")


def one_hot(gt: np.ndarray, num_classes: int, dtype=np.float32) -> np.ndarray:
    """(N, H, W) labels to (N, L, H, W) indicators."""
    gt = np.asarray(gt)
    _check_labels(gt, num_classes)
    encoded = np.eye(num_classes, dtype=dtype)[gt.astype(np.int64)]
    return np.ascontiguousarray(np.moveaxis(encoded, -1, -3))


def weighted_cross_entropy(probs: Tensor, gt: np.ndarray, omega: Optional[np.ndarray] = None) -> Tensor:
    """
    -sum_x omega(g(x)) * log p_{g(x)}(x), divided by the number of pixels.

    Args:
        probs: (N, L, H, W) or (L, H, W) per-pixel class distributions
        gt: Matching (N, H, W) or (H, W) labels
        omega: (L,) class weights; None means all ones

    Returns:
        Scalar loss tensor
    """
    probs, gt = _batched(probs, gt)
    n, num_classes = probs.shape[0], probs.shape[1]
    if gt.shape != (n,) + probs.shape[2:]:
        raise ShapeError(f"labels {gt.shape} do not match probabilities {probs.shape}")
    target = one_hot(gt, num_classes, probs.dtype)
    if omega is not None:
        omega = np.asarray(omega, dtype=probs.dtype)
        if omega.shape != (num_classes,):
            raise ShapeError(f"class weights {omega.shape} do not match {num_classes} classes")
        target = target * omega[gt.astype(np.int64)][:, None]
    pixels = gt.size
    return -(Tensor(target) * log(probs)).sum() / float(pixels)


def multiclass_dice_loss(probs: Tensor, gt_onehot: np.ndarray) -> Tensor:
    """
    Negative mean over classes of 2 sum(p g) / (sum p^2 + sum g^2 + eps).

    Sums run over the batch and all pixels. A class with no probability mass
    and no ground-truth pixels scores 1, so the loss lies in [-1, 0].
    """
    gt_onehot = np.asarray(gt_onehot)
    if probs.ndim == 3:
        probs = probs.reshape((1,) + probs.shape)
        gt_onehot = gt_onehot[None]
    if gt_onehot.shape != probs.shape:
        raise ShapeError(f"one-hot target {gt_onehot.shape} does not match probabilities {probs.shape}")
    if not (np.isin(gt_onehot, (0, 1)).all() and np.all(gt_onehot.sum(axis=1) == 1)):
        raise InvalidInputError("ground truth is not one-hot along the class axis")

    axes = (0, 2, 3)
    target = Tensor(gt_onehot.astype(probs.dtype))
    intersection = (probs * target).sum(axes=axes)
    prob_mass = (probs * probs).sum(axes=axes)
    target_mass = gt_onehot.sum(axis=axes).astype(probs.dtype)
    terms = 2.0 * intersection / (prob_mass + Tensor(target_mass + DICE_EPSILON))

    absent = ((prob_mass.data == 0) & (target_mass == 0)).astype(probs.dtype)
    if absent.any():
        terms = terms * Tensor(1.0 - absent) + Tensor(absent)
    return -terms.mean()


def sec_loss(sec_logits: Tensor, presence: np.ndarray) -> Tensor:
    """Mean binary cross-entropy with logits: softplus(z) - z * y."""
    presence = np.asarray(presence)
    if presence.shape != sec_logits.shape:
        raise ShapeError(f"presence {presence.shape} does not match logits {sec_logits.shape}")
    if not np.isin(presence, (0, 1)).all():
        raise InvalidInputError("presence entries must be 0 or 1")
    target = Tensor(presence.astype(sec_logits.dtype))
    return (softplus(sec_logits) - sec_logits * target).mean()


def composite_loss(output: FFCEOutput, gt: np.ndarray, presence: np.ndarray,
                   omega: Optional[np.ndarray] = None,
                   weights: Optional[LossWeights] = None) -> LossReport:
    """
    Weighted sum lambda_ce * CE + lambda_dice * Dice + lambda_sec * SEC.

    Args:
        output: Forward pass outputs (probabilities and SEC logits are used)
        gt: Labels matching the probability maps
        presence: Per-sample class presence vectors
        omega: Class weights for the cross-entropy term
        weights: Term weights; defaults to LossWeights()

    Returns:
        LossReport with the differentiable total and float components
    """
    weights = weights or LossWeights()
    num_classes = output.probs.shape[-3]
    ce = weighted_cross_entropy(output.probs, gt, omega)
    dice = multiclass_dice_loss(output.probs, one_hot(np.asarray(gt), num_classes, output.probs.dtype))
    sec = sec_loss(output.sec_logits, presence)
    total = ce * weights.lambda_ce + dice * weights.lambda_dice + sec * weights.lambda_sec
    return LossReport(total=total, ce=ce.item(), dice=dice.item(), sec=sec.item())


def class_frequencies(label_volumes: Sequence[np.ndarray], num_classes: int) -> np.ndarray:
    """Fraction of all voxels carrying each class."""
    if not label_volumes:
        raise InvalidInputError("class weights need at least one label volume")
    counts = np.zeros(num_classes, dtype=np.int64)
    for labels in label_volumes:
        labels = np.asarray(labels)
        _check_labels(labels, num_classes)
        counts += np.bincount(labels.reshape(-1).astype(np.int64), minlength=num_classes)
    total = counts.sum()
    if total == 0:
        raise InvalidInputError("label volumes hold no voxels")
    return counts / total


def median_frequency_weights(frequencies: np.ndarray) -> np.ndarray:
    """
    omega_c = median(freq) / freq_c with the median taken over present classes;
    absent classes receive the largest present weight.
    """
    frequencies = np.asarray(frequencies, dtype=np.float64)
    present = frequencies > 0
    if not present.any():
        raise InvalidInputError("no class is present")
    median = np.median(frequencies[present])
    weights = np.zeros_like(frequencies)
    weights[present] = median / frequencies[present]
    weights[~present] = weights[present].max()
    return weights


def compute_class_weights(label_volumes: Sequence[np.ndarray], num_classes: int) -> np.ndarray:
    """Median-frequency balancing weights over a set of label volumes."""
    weights = median_frequency_weights(class_frequencies(label_volumes, num_classes))
    logger.info(f"Class weights: {np.array2string(weights, precision=3)}")
    return weights
