"""
FFCE Segmenter - Volumes and Slice Samples
Intensity/label volumes and extraction of coronal training samples with
their depth-as-channel stacks and class presence vectors.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from core.error_monitor import InvalidInputError, ShapeError

logger = logging.getLogger(__name__)

INTENSITY_DTYPE = np.float32
LABEL_DTYPE = np.uint16


@dataclass
class Volume:
    """D x H x W intensity grid; axis 0 indexes coronal planes."""
    intensities: np.ndarray
    id: str = ''

    def __post_init__(self):
        self.intensities = np.ascontiguousarray(self.intensities, dtype=INTENSITY_DTYPE)
        if self.intensities.ndim != 3 or 0 in self.intensities.shape:
            raise ShapeError(f"volume {self.id!r} must be a non-empty 3-d grid, got {self.intensities.shape}")
        if not np.all(np.isfinite(self.intensities)):
            raise InvalidInputError(f"volume {self.id!r} contains non-finite intensities")

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.intensities.shape

    def to_dict(self) -> dict:
        return {'id': self.id, 'dims': list(self.dims)}


@dataclass
class LabelVolume:
    """D x H x W integer class grid."""
    labels: np.ndarray
    num_classes: Optional[int] = None
    id: str = ''

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 3 or 0 in labels.shape:
            raise ShapeError(f"label volume {self.id!r} must be a non-empty 3-d grid, got {labels.shape}")
        if labels.dtype.kind not in 'iu':
            raise InvalidInputError(f"label volume {self.id!r} must hold integers, got {labels.dtype}")
        if labels.size and labels.min() < 0:
            raise InvalidInputError(f"label volume {self.id!r} has negative labels")
        if self.num_classes is not None and labels.size and labels.max() >= self.num_classes:
            raise InvalidInputError(
                f"label volume {self.id!r} has label {int(labels.max())} >= num_classes {self.num_classes}"
            )
        self.labels = np.ascontiguousarray(labels, dtype=LABEL_DTYPE)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.labels.shape

    def to_dict(self) -> dict:
        return {'id': self.id, 'dims': list(self.dims), 'num_classes': self.num_classes}


@dataclass
class SliceSample:
    """One training unit built around coronal plane `origin[1]`."""
    slice: np.ndarray                       # 1 x H x W
    stack: np.ndarray                       # S x H x W
    gt: Optional[np.ndarray] = None         # H x W labels
    presence: Optional[np.ndarray] = None   # L binary entries
    origin: Tuple[str, int] = field(default=('', 0))

    def to_dict(self) -> dict:
        return {
            'volume_id': self.origin[0],
            'index': self.origin[1],
            'stack_depth': self.stack.shape[0],
            'presence': None if self.presence is None else self.presence.astype(int).tolist(),
        }


def stack_window(index: int, depth: int, stack_depth: int) -> List[int]:
    """
    Plane indices of the depth-as-channel stack centred on `index`.

    The window runs from index - floor((S-1)/2) to index + ceil((S-1)/2), so an
    even S leans one plane forward. Indices outside [0, depth) are clamped to
    the nearest boundary plane.
    """
    if stack_depth < 1:
        raise InvalidInputError(f"stack depth must be >= 1, got {stack_depth}")
    start = index - (stack_depth - 1) // 2
    return [min(max(plane, 0), depth - 1) for plane in range(start, start + stack_depth)]


def presence_vector(gt: np.ndarray, num_classes: int) -> np.ndarray:
    """Binary vector whose entry l is 1 exactly when some pixel of `gt` equals l."""
    gt = np.asarray(gt)
    if gt.size and (gt.min() < 0 or gt.max() >= num_classes):
        raise InvalidInputError(f"labels must lie in [0, {num_classes}), got range [{gt.min()}, {gt.max()}]")
    counts = np.bincount(gt.reshape(-1).astype(np.int64), minlength=num_classes)
    return (counts > 0).astype(np.float32)


def extract_slice_sample(volume: Volume, labels: Optional[LabelVolume], index: int,
                         stack_depth: int, num_classes: int) -> SliceSample:
    """
    Build the sample for coronal plane `index`.

    Args:
        volume: Intensity volume
        labels: Paired labels, or None at inference time
        index: Coronal plane, 0 <= index < D
        stack_depth: S, planes in the stack
        num_classes: L, length of the presence vector

    Returns:
        SliceSample with gt and presence filled when labels are given
    """
    depth = volume.dims[0]
    if not 0 <= index < depth:
        raise InvalidInputError(f"coronal index {index} out of range [0, {depth}) for volume {volume.id!r}")
    if labels is not None and labels.dims != volume.dims:
        raise ShapeError(f"label dims {labels.dims} differ from volume dims {volume.dims}")

    planes = volume.intensities
    sample = SliceSample(
        slice=planes[index][None].copy(),
        stack=planes[stack_window(index, depth, stack_depth)],
        origin=(volume.id, index),
    )
    if labels is not None:
        sample.gt = labels.labels[index].astype(np.int64)
        sample.presence = presence_vector(sample.gt, num_classes)
    return sample


def minmax_normalize(volume: Volume) -> Volume:
    """Rescale intensities to [0, 1]; a constant volume maps to zeros."""
    low, high = float(volume.intensities.min()), float(volume.intensities.max())
    if high == low:
        return Volume(np.zeros_like(volume.intensities), volume.id)
    return Volume((volume.intensities - low) / (high - low), volume.id)
