"""
FFCE Segmenter - Volume Segmentation
Slice-by-slice whole-volume inference with the read-shared model.
"""

import logging
import time
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from autograd import Mode, Tensor, no_grad
from core.error_monitor import ShapeError
from core.resource_monitor import resource_monitor
from core.task_manager import task_manager
from data.samples import LabelVolume, Volume, extract_slice_sample, minmax_normalize
from network.model import ffce_forward
from network.params import ModelParams

logger = logging.getLogger(__name__)


@dataclass
class SegmentationResult:
    """Predicted labels for a whole volume."""
    prediction: LabelVolume
    gammas: np.ndarray          # D x L scaling factors, one row per coronal plane
    seconds: float

    def to_dict(self) -> dict:
        return {
            'volume_id': self.prediction.id,
            'dims': list(self.prediction.dims),
            'runtime_seconds': self.seconds,
            'gammas': self.gammas.tolist(),
        }


def segment_volume(volume: Volume, params: ModelParams, normalize: bool = False,
                   workers: Optional[int] = None) -> SegmentationResult:
    """
    Label every coronal plane of a volume.

    Each plane runs through the network in eval mode; the per-pixel argmax of
    the class probabilities (lowest class index on ties) becomes the label.
    Planes are evaluated concurrently and reassembled in coronal order.

    Args:
        volume: Intensity volume, H and W divisible by the network's pooling depth
        params: Trained parameters
        normalize: Apply min-max intensity normalization first
        workers: Worker cap; defaults to FFCE_THREADS

    Returns:
        SegmentationResult with the same dims as the input
    """
    config = params.config
    depth, height, width = volume.dims
    divisor = config.spatial_divisor
    if height % divisor or width % divisor:
        raise ShapeError(f"volume {volume.id!r} plane {height}x{width} is not divisible by {divisor}")
    if normalize:
        volume = minmax_normalize(volume)

    def segment_plane(index: int) -> Tuple[np.ndarray, np.ndarray]:
        sample = extract_slice_sample(volume, None, index, config.stack_depth, config.num_classes)
        with no_grad():
            output = ffce_forward(
                Tensor(sample.slice[None], dtype=params.dtype),
                Tensor(sample.stack[None], dtype=params.dtype),
                params, mode=Mode.EVAL,
            )
        labels = np.argmax(output.probs.data[0], axis=0).astype(np.uint16)
        return labels, output.gamma.data[0].astype(np.float64)

    start_time = time.perf_counter()
    planes = task_manager.map_ordered('segment', segment_plane, range(depth), workers=workers)
    seconds = time.perf_counter() - start_time

    prediction = LabelVolume(np.stack([labels for labels, _ in planes]), num_classes=config.num_classes,
                             id=f"{volume.id}_pred" if volume.id else 'prediction')
    gammas = np.stack([gamma for _, gamma in planes])
    resource_monitor.sample(volume.id or 'volume')
    logger.info(f"Segmented volume {volume.id or '<unnamed>'} {volume.dims} in {seconds:.2f}s")
    return SegmentationResult(prediction=prediction, gammas=gammas, seconds=seconds)
