"""
FFCE Segmenter - Synthetic Dataset Generator
Deterministic phantom volumes made of nested ellipsoidal class regions.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from core.error_monitor import InvalidInputError
from data.samples import LabelVolume, Volume
from volume_store import DatasetManifest, write_manifest, write_volume

logger = logging.getLogger(__name__)

NOISE_SIGMA = 0.05
OUTER_EXTENT = 0.4          # outermost semi-axis as a fraction of each extent
AXIS_JITTER = (0.9, 1.1)
CENTER_JITTER = 0.05
MIN_SHELL_VOXELS = 2.0
MAX_SEPARATED_CLASSES = 10  # adjacent means 1/(L-1) apart stay above 2 sigma up to here


@dataclass
class SyntheticDataset:
    """Files written by one generator run."""
    train_manifest: Path
    test_manifest: Optional[Path] = None
    volume_paths: List[Path] = field(default_factory=list)
    label_paths: List[Path] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            'train_manifest': str(self.train_manifest),
            'test_manifest': str(self.test_manifest) if self.test_manifest else None,
            'volumes': [str(path) for path in self.volume_paths],
            'labels': [str(path) for path in self.label_paths],
        }


def class_mean(label: int, num_classes: int) -> float:
    """Noise-free intensity of class `label`; background is 0, the innermost class 1."""
    return label / (num_classes - 1)


def _check_geometry(dims: Tuple[int, int, int], num_classes: int) -> None:
    if len(dims) != 3 or min(dims) < 1:
        raise InvalidInputError(f"dims must be three positive extents, got {dims}")
    if num_classes < 2:
        raise InvalidInputError(f"synthetic data needs at least 2 classes, got {num_classes}")
    shell = OUTER_EXTENT * AXIS_JITTER[0] * min(dims[1:]) / (num_classes - 1)
    if shell < MIN_SHELL_VOXELS:
        raise InvalidInputError(
            f"planes {dims[1:]} are too small to nest {num_classes - 1} regions "
            f"(shell thickness {shell:.2f} < {MIN_SHELL_VOXELS} voxels)"
        )
    if num_classes > MAX_SEPARATED_CLASSES:
        logger.warning(f"{num_classes} classes: adjacent class means are closer than 2 sigma of the noise")


def _check_coverage(label_volumes: List[LabelVolume], dims: Tuple[int, int, int], num_classes: int) -> None:
    seen = np.zeros(num_classes, dtype=bool)
    for labels in label_volumes:
        seen[np.unique(labels.labels)] = True
    missing = np.flatnonzero(~seen).tolist()
    if missing:
        raise InvalidInputError(
            f"dims {dims} are too small to nest {num_classes - 1} regions: "
            f"classes {missing} appear in no volume"
        )


def synthesize_volume(rng: np.random.Generator, dims: Tuple[int, int, int], num_classes: int,
                      volume_id: str = '') -> Tuple[Volume, LabelVolume]:
    """
    One phantom: classes 1..L-1 fill nested ellipsoids sharing a jittered
    centre (class L-1 innermost), plus Gaussian intensity noise.
    """
    _check_geometry(dims, num_classes)
    dims_array = np.asarray(dims, dtype=np.float64)
    center = dims_array / 2.0 + rng.uniform(-CENTER_JITTER, CENTER_JITTER, size=3) * dims_array
    axis_scale = rng.uniform(*AXIS_JITTER, size=3)

    grid = np.ogrid[:dims[0], :dims[1], :dims[2]]
    labels = np.zeros(dims, dtype=np.uint16)
    for label in range(1, num_classes):
        semi_axes = OUTER_EXTENT * dims_array * axis_scale * (num_classes - label) / (num_classes - 1)
        inside = sum(((coord + 0.5 - c) / a) ** 2 for coord, c, a in zip(grid, center, semi_axes)) <= 1.0
        labels[inside] = label

    means = np.array([class_mean(label, num_classes) for label in range(num_classes)])
    intensities = means[labels] + rng.normal(0.0, NOISE_SIGMA, size=dims)
    return (Volume(intensities.astype(np.float32), id=volume_id),
            LabelVolume(labels, num_classes=num_classes, id=f"{volume_id}_seg"))


def generate_synthetic_dataset(seed: int, num_volumes: int, dims: Tuple[int, int, int], num_classes: int,
                               out_dir: Union[str, Path], test_volumes: int = 0,
                               stack_depth: Optional[int] = None) -> SyntheticDataset:
    """
    Write a deterministic synthetic dataset.

    Args:
        seed: Generator seed; the same seed gives byte-identical files
        num_volumes: Number of volume/label pairs
        dims: (D, H, W) of every volume
        num_classes: L, including background
        out_dir: Destination directory
        test_volumes: How many of the last volumes go to test.tsv instead of train.tsv
        stack_depth: Optional S recorded in the manifest header

    Returns:
        SyntheticDataset describing the written files
    """
    if num_volumes < 1:
        raise InvalidInputError(f"need at least one volume, got {num_volumes}")
    if not 0 <= test_volumes < num_volumes:
        raise InvalidInputError(f"test volumes must lie in [0, {num_volumes}), got {test_volumes}")
    dims = tuple(int(extent) for extent in dims)
    _check_geometry(dims, num_classes)

    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    result = SyntheticDataset(train_manifest=out_dir / 'train.tsv')
    phantoms = [synthesize_volume(rng, dims, num_classes, f"vol_{index:03d}") for index in range(num_volumes)]
    _check_coverage([labels for _, labels in phantoms], dims, num_classes)
    for volume, labels in phantoms:
        result.volume_paths.append(write_volume(volume, out_dir / f"{volume.id}.mvol"))
        result.label_paths.append(write_volume(labels, out_dir / f"{labels.id}.mvol"))

    pairs = list(zip(result.volume_paths, result.label_paths))
    split_at = num_volumes - test_volumes
    meta = {'seed': str(seed)}
    write_manifest(DatasetManifest(pairs[:split_at], 'train', num_classes, stack_depth, metadata=meta),
                   result.train_manifest)
    if test_volumes:
        result.test_manifest = out_dir / 'test.tsv'
        write_manifest(DatasetManifest(pairs[split_at:], 'test', num_classes, stack_depth, metadata=meta),
                       result.test_manifest)

    logger.info(f"Generated {num_volumes} synthetic volumes {dims} with {num_classes} classes in {out_dir}")
    return result
