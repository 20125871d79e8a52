"""
FFCE Segmenter - Slice Dataset
Indexable collection of coronal slice samples across a set of volumes.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from core.error_monitor import DataFormatError, InvalidInputError, ShapeError
from data.samples import LabelVolume, SliceSample, Volume, extract_slice_sample, minmax_normalize
from volume_store import read_manifest, read_volume

logger = logging.getLogger(__name__)


@dataclass
class SampleBatch:
    """Stacked network inputs and targets for a batch of samples."""
    slices: np.ndarray      # N x 1 x H x W
    stacks: np.ndarray      # N x S x H x W
    gt: np.ndarray          # N x H x W
    presence: np.ndarray    # N x L

    def __len__(self) -> int:
        return self.slices.shape[0]


class SliceDataset:
    """
    Every coronal plane of every volume, addressable by a flat index in
    (volume order, plane order).
    """

    def __init__(self, pairs: Sequence[Tuple[Volume, LabelVolume]], stack_depth: int, num_classes: int,
                 normalize: bool = False):
        self.stack_depth = stack_depth
        self.num_classes = num_classes
        self.pairs: List[Tuple[Volume, LabelVolume]] = []
        for volume, labels in pairs:
            if volume.dims != labels.dims:
                raise ShapeError(f"volume {volume.id!r} dims {volume.dims} differ from label dims {labels.dims}")
            if labels.labels.size and int(labels.labels.max()) >= num_classes:
                raise InvalidInputError(
                    f"label volume {labels.id!r} holds label {int(labels.labels.max())} >= {num_classes} classes"
                )
            self.pairs.append((minmax_normalize(volume) if normalize else volume, labels))
        self._index = [(position, plane)
                       for position, (volume, _) in enumerate(self.pairs)
                       for plane in range(volume.dims[0])]

    @classmethod
    def from_manifest(cls, path: Union[str, Path], stack_depth: int, num_classes: int,
                      normalize: bool = False) -> 'SliceDataset':
        manifest = read_manifest(path)
        if manifest.num_classes is not None and manifest.num_classes != num_classes:
            logger.warning(f"Manifest declares {manifest.num_classes} classes, training with {num_classes}")
        pairs = []
        for image_path, label_path in manifest.entries:
            volume, labels = read_volume(image_path), read_volume(label_path)
            if not isinstance(volume, Volume) or not isinstance(labels, LabelVolume):
                raise DataFormatError(f"expected float image and uint16 labels in pair "
                                      f"{image_path.name}/{label_path.name}")
            labels.num_classes = num_classes
            pairs.append((volume, labels))
        return cls(pairs, stack_depth, num_classes, normalize)

    def __len__(self) -> int:
        return len(self._index)

    def __getitem__(self, index: int) -> SliceSample:
        position, plane = self._index[index]
        volume, labels = self.pairs[position]
        return extract_slice_sample(volume, labels, plane, self.stack_depth, self.num_classes)

    @property
    def plane_shape(self) -> Optional[Tuple[int, int]]:
        return self.pairs[0][0].dims[1:] if self.pairs else None

    def label_volumes(self) -> List[np.ndarray]:
        return [labels.labels for _, labels in self.pairs]

    def collate(self, indices: Sequence[int]) -> SampleBatch:
        samples = [self[int(index)] for index in indices]
        return SampleBatch(
            slices=np.stack([sample.slice for sample in samples]),
            stacks=np.stack([sample.stack for sample in samples]),
            gt=np.stack([sample.gt for sample in samples]),
            presence=np.stack([sample.presence for sample in samples]),
        )
