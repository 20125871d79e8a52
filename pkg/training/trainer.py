"""
FFCE Segmenter - Trainer
Epoch loop, poly-scheduled SGD updates, and resumable checkpoints.
"""

import logging
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import structlog

from autograd import Mode, Tensor
from core.checkpoint_manager import checkpoint_manager
from core.error_monitor import ConfigurationError, DataFormatError, InvalidInputError
from core.resource_monitor import resource_monitor
from data.dataset import SliceDataset
from network.config import NetworkConfig
from network.model import build_params, ffce_forward
from network.params import ModelParams
from training.config import TrainConfig
from training.losses import compute_class_weights, composite_loss
from training.optimizer import OptimizerState, poly_lr, sgd_step

logger = logging.getLogger(__name__)
events = structlog.stdlib.get_logger(__name__)

CHECKPOINT_FORMAT = 'ffce-checkpoint'


@dataclass
class EpochReport:
    """Mean losses over the batches of one epoch."""
    epoch: int
    iterations: int
    total: float
    ce: float
    dice: float
    sec: float
    lr: float
    seconds: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class Trainer:
    """
    Owns the model parameters, optimizer state and random generator of one
    training run. The generator drives both sample shuffling and dropout, so
    (seed, configs, data) fix the whole trajectory.
    """

    def __init__(self, params: ModelParams, config: TrainConfig,
                 class_weights: Optional[np.ndarray] = None,
                 checkpoint_path: Optional[Union[str, Path]] = None, keep_snapshots: int = 0):
        """
        Initialize a trainer.

        Args:
            params: Model parameters, updated in place
            config: Optimization settings
            class_weights: Cross-entropy class weights; computed from the
                training labels on first use when class weighting is enabled
            checkpoint_path: Where fit() writes a checkpoint after every epoch
            keep_snapshots: Also keep this many per-epoch snapshots next to
                checkpoint_path, pruning older ones
        """
        self.params = params
        self.config = config
        self.state = OptimizerState.zeros_like(params.parameters())
        self.rng = np.random.default_rng(config.seed)
        self.class_weights = None if class_weights is None else np.asarray(class_weights, dtype=np.float64)
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path else None
        self.keep_snapshots = keep_snapshots
        self.epoch = 0
        self.history: List[EpochReport] = []

    @property
    def network_config(self) -> NetworkConfig:
        return self.params.config

    @classmethod
    def create(cls, network_config: NetworkConfig, config: TrainConfig, **kwargs) -> 'Trainer':
        """Fresh trainer with parameters initialized from `config.seed`."""
        return cls(build_params(network_config, seed=config.seed), config, **kwargs)

    # DRY Helper Methods

    def _iter_total(self, num_samples: int) -> int:
        return self.config.epochs * math.ceil(num_samples / self.config.batch_size)

    def _omega(self, dataset: SliceDataset) -> Optional[np.ndarray]:
        if not self.config.class_weights_enabled:
            return None
        if self.class_weights is None:
            self.class_weights = compute_class_weights(dataset.label_volumes(), self.network_config.num_classes)
        return self.class_weights

    def train_epoch(self, dataset: SliceDataset) -> EpochReport:
        """
        One pass over a shuffled dataset: forward, composite loss, backward and
        an SGD step per batch, with the learning rate set per iteration.

        Args:
            dataset: Training samples

        Returns:
            EpochReport with batch-mean losses
        """
        if len(dataset) == 0:
            raise InvalidInputError("cannot train on an empty dataset")
        num_classes = self.network_config.num_classes
        if dataset.num_classes != num_classes or dataset.stack_depth != self.network_config.stack_depth:
            raise ConfigurationError(
                f"dataset (L={dataset.num_classes}, S={dataset.stack_depth}) does not match network "
                f"(L={num_classes}, S={self.network_config.stack_depth})"
            )

        iter_total = self._iter_total(len(dataset))
        omega = self._omega(dataset)
        dtype = self.params.dtype
        cfg = self.config
        start_time = time.perf_counter()
        sums = np.zeros(4)
        lr = 0.0

        order = self.rng.permutation(len(dataset))
        batches = [order[i:i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
        for batch_indices in batches:
            batch = dataset.collate(batch_indices)
            self.params.zero_grad()
            output = ffce_forward(
                Tensor(batch.slices, dtype=dtype), Tensor(batch.stacks, dtype=dtype),
                self.params, mode=Mode.TRAIN, rng=self.rng,
            )
            report = composite_loss(output, batch.gt, batch.presence, omega, cfg.loss_weights)
            report.total.backward()

            lr = poly_lr(cfg.base_lr, self.state.iteration, iter_total, cfg.poly_power)
            sgd_step(self.params.parameters(), self.state, lr, cfg.momentum, cfg.weight_decay)
            sums += (report.total_value, report.ce, report.dice, report.sec)
            logger.debug(f"iteration {self.state.iteration}/{iter_total}: loss {report.total_value:.6f} lr {lr:.6g}")

        self.epoch += 1
        means = sums / len(batches)
        epoch_report = EpochReport(
            epoch=self.epoch, iterations=len(batches),
            total=float(means[0]), ce=float(means[1]), dice=float(means[2]), sec=float(means[3]),
            lr=lr, seconds=time.perf_counter() - start_time,
        )
        self.history.append(epoch_report)
        return epoch_report

    def fit(self, dataset: SliceDataset, epochs: Optional[int] = None) -> List[EpochReport]:
        """
        Train until `epochs` epochs have completed in total (default: the
        configured number), resuming from the current epoch.
        """
        target = epochs if epochs is not None else self.config.epochs
        if target > self.config.epochs:
            raise InvalidInputError(f"cannot train {target} epochs under a schedule of {self.config.epochs}")

        reports = []
        while self.epoch < target:
            report = self.train_epoch(dataset)
            reports.append(report)
            metrics = resource_monitor.sample(f"epoch {report.epoch}")
            events.info('epoch_complete', epoch=report.epoch, iteration=self.state.iteration,
                        loss_total=round(report.total, 6), loss_ce=round(report.ce, 6),
                        loss_dice=round(report.dice, 6), loss_sec=round(report.sec, 6),
                        lr=report.lr, seconds=round(report.seconds, 3), rss_mb=round(metrics.process_rss_mb, 1))
            if self.checkpoint_path is not None:
                self.save_checkpoint(self.checkpoint_path)
                if self.keep_snapshots > 0:
                    self._snapshot()
        return reports

    # Checkpoints

    def save_checkpoint(self, path: Union[str, Path]) -> Path:
        """Write every piece of numeric state needed to continue this run bit-exactly."""
        metadata = {
            'format': CHECKPOINT_FORMAT,
            'network_config': self.network_config.model_dump(),
            'train_config': self.config.model_dump(),
            'dtype': self.params.dtype.str,
            'epoch': self.epoch,
            'iteration': self.state.iteration,
            'rng_state': self.rng.bit_generator.state,
            'history': [report.to_dict() for report in self.history],
        }
        blobs = self.params.state_arrays()
        blobs.update({f"momentum/{name}": buffer for name, buffer in self.state.momentum.items()})
        if self.class_weights is not None:
            blobs['class_weights'] = self.class_weights
        checkpoint_manager.save(path, metadata, blobs)
        return Path(path)

    def _snapshot(self) -> Path:
        stem = self.checkpoint_path.stem
        path = self.save_checkpoint(self.checkpoint_path.with_name(f"{stem}_epoch{self.epoch:03d}.ffck"))
        checkpoint_manager.prune(self.checkpoint_path.parent, self.keep_snapshots, pattern=f"{stem}_epoch*.ffck")
        return path

    def load_checkpoint(self, path: Union[str, Path]) -> None:
        """Restore state written by save_checkpoint into this trainer."""
        metadata, blobs = checkpoint_manager.load(path)
        _check_format(metadata, path)
        stored = NetworkConfig.model_validate(metadata['network_config'])
        if stored != self.network_config:
            raise ConfigurationError(f"checkpoint {path} was written for a different network configuration")
        self._restore(metadata, blobs)

    def _restore(self, metadata: Dict[str, Any], blobs: Dict[str, np.ndarray]) -> None:
        self.params.load_state_arrays(blobs)
        momentum = {key[len('momentum/'):]: value for key, value in blobs.items() if key.startswith('momentum/')}
        if set(momentum) != set(self.params.names()):
            raise ConfigurationError("checkpoint momentum buffers do not match the model parameters")
        self.state = OptimizerState(
            momentum={name: np.array(value, dtype=self.params.dtype) for name, value in momentum.items()},
            iteration=int(metadata['iteration']),
        )
        self.rng = np.random.default_rng()
        self.rng.bit_generator.state = metadata['rng_state']
        self.class_weights = blobs.get('class_weights')
        self.epoch = int(metadata['epoch'])
        self.history = [EpochReport(**entry) for entry in metadata.get('history', [])]

    @classmethod
    def from_checkpoint(cls, path: Union[str, Path], config: Optional[TrainConfig] = None,
                        checkpoint_path: Optional[Union[str, Path]] = None,
                        keep_snapshots: int = 0) -> 'Trainer':
        """
        Rebuild a trainer from a checkpoint.

        Args:
            path: Checkpoint file
            config: Replacement training settings; defaults to the stored ones
            checkpoint_path: Where subsequent fit() calls write checkpoints
            keep_snapshots: Per-epoch snapshots to retain
        """
        metadata, blobs = checkpoint_manager.load(path)
        _check_format(metadata, path)
        network_config = NetworkConfig.model_validate(metadata['network_config'])
        train_config = config or TrainConfig.model_validate(metadata['train_config'])
        params = build_params(network_config, dtype=np.dtype(metadata.get('dtype', '<f4')))
        trainer = cls(params, train_config, checkpoint_path=checkpoint_path, keep_snapshots=keep_snapshots)
        trainer._restore(metadata, blobs)
        return trainer


def _check_format(metadata: Dict[str, Any], path: Union[str, Path]) -> None:
    if metadata.get('format') != CHECKPOINT_FORMAT:
        raise DataFormatError(f"not a training checkpoint (format {metadata.get('format')!r})", path=str(path))


def load_model(path: Union[str, Path]) -> ModelParams:
    """Parameters and buffers of a checkpoint, ready for inference."""
    metadata, blobs = checkpoint_manager.load(path)
    _check_format(metadata, path)
    network_config = NetworkConfig.model_validate(metadata['network_config'])
    params = build_params(network_config, dtype=np.dtype(metadata.get('dtype', '<f4')))
    params.load_state_arrays(blobs)
    return params
