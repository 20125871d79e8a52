"""
FFCE Segmenter - Dice Evaluation
Per-class and mean Dice overlap between predicted and reference labels.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import numpy as np

from core.error_monitor import InvalidInputError, ShapeError
from data.samples import LabelVolume

logger = logging.getLogger(__name__)


@dataclass
class MetricsReport:
    """
    Dice per class (None when the class is absent from both volumes) and
    their mean over the included classes: non-background classes present in
    at least one of the two volumes.
    """
    per_class: List[Optional[float]]
    mean_dice: float
    voxel_counts: List[int]
    pred_voxel_counts: List[int] = field(default_factory=list)
    included_classes: List[int] = field(default_factory=list)
    runtime_seconds: Optional[float] = None

    @property
    def num_classes(self) -> int:
        return len(self.per_class)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'per_class': self.per_class,
            'mean_dice': self.mean_dice,
            'voxel_counts': self.voxel_counts,
            'pred_voxel_counts': self.pred_voxel_counts,
            'included_classes': self.included_classes,
            'num_classes': self.num_classes,
            'runtime_seconds': self.runtime_seconds,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MetricsReport':
        try:
            return cls(
                per_class=[None if value is None else float(value) for value in data['per_class']],
                mean_dice=float(data['mean_dice']),
                voxel_counts=[int(value) for value in data['voxel_counts']],
                pred_voxel_counts=[int(value) for value in data.get('pred_voxel_counts', [])],
                included_classes=[int(value) for value in data.get('included_classes', [])],
                runtime_seconds=data.get('runtime_seconds'),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidInputError(f"malformed metrics report: {e}") from None


def dice_score(pred_mask: np.ndarray, gt_mask: np.ndarray) -> Optional[float]:
    """2|P and G| / (|P| + |G|), or None when both masks are empty."""
    size = int(pred_mask.sum()) + int(gt_mask.sum())
    if size == 0:
        return None
    return 2.0 * int(np.logical_and(pred_mask, gt_mask).sum()) / size


def evaluate_dice(pred: Union[LabelVolume, np.ndarray], gt: Union[LabelVolume, np.ndarray],
                  num_classes: Optional[int] = None,
                  runtime_seconds: Optional[float] = None) -> MetricsReport:
    """
    Compare a predicted label volume with the reference.

    Args:
        pred: Predicted labels
        gt: Reference labels with the same dims
        num_classes: L; defaults to one more than the largest label seen
        runtime_seconds: Segmentation time to carry into the report

    Returns:
        MetricsReport; background (class 0) never enters the mean
    """
    pred_labels = pred.labels if isinstance(pred, LabelVolume) else np.asarray(pred)
    gt_labels = gt.labels if isinstance(gt, LabelVolume) else np.asarray(gt)
    if pred_labels.shape != gt_labels.shape:
        raise ShapeError(f"prediction dims {pred_labels.shape} differ from ground-truth dims {gt_labels.shape}")
    observed = int(max(pred_labels.max(initial=0), gt_labels.max(initial=0))) + 1
    num_classes = num_classes or observed
    if observed > num_classes:
        raise InvalidInputError(f"labels reach {observed - 1} but only {num_classes} classes were declared")

    per_class = [dice_score(pred_labels == label, gt_labels == label) for label in range(num_classes)]
    gt_counts = np.bincount(gt_labels.reshape(-1).astype(np.int64), minlength=num_classes)
    pred_counts = np.bincount(pred_labels.reshape(-1).astype(np.int64), minlength=num_classes)
    included = [label for label in range(1, num_classes) if per_class[label] is not None]
    mean_dice = float(np.mean([per_class[label] for label in included])) if included else 1.0

    logger.debug(f"Mean Dice {mean_dice:.4f} over {len(included)} classes")
    return MetricsReport(
        per_class=per_class,
        mean_dice=mean_dice,
        voxel_counts=gt_counts.tolist(),
        pred_voxel_counts=pred_counts.tolist(),
        included_classes=included,
        runtime_seconds=runtime_seconds,
    )
