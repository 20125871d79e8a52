"""
FFCE Segmenter - Pipeline Commands
synth, train and infer: from synthetic volumes to a trained checkpoint to
predicted label volumes.
"""

import argparse
import json
import logging
from pathlib import Path
from typing import Tuple

from core.error_monitor import DataFormatError, UsageError
from data.dataset import SliceDataset
from data.samples import Volume
from data.synthetic import generate_synthetic_dataset
from inference.segment import segment_volume
from network.config import NetworkConfig
from training.config import LossWeights, TrainConfig
from training.trainer import Trainer, load_model
from volume_store import read_volume, write_volume

logger = logging.getLogger(__name__)


# DRY Helper Methods

def parse_dims(text: str) -> Tuple[int, int, int]:
    """Parse 'D,H,W' into three positive extents."""
    try:
        dims = tuple(int(part) for part in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f"dims must be three comma-separated integers, got {text!r}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"dims must be three positive integers, got {text!r}")
    return dims


def _write_json(payload: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + '\n', encoding='utf-8')


class PipelineCommands:
    """Dataset generation, training and inference subcommands"""

    def register(self, subparsers) -> None:
        synth = subparsers.add_parser('synth', help='generate a synthetic dataset')
        synth.add_argument('--seed', type=int, default=0)
        synth.add_argument('--volumes', type=int, default=4)
        synth.add_argument('--dims', type=parse_dims, default=(32, 32, 32), help='D,H,W')
        synth.add_argument('--classes', type=int, default=5)
        synth.add_argument('--out', type=Path, required=True)
        synth.add_argument('--test-volumes', type=int, default=0,
                           help='hold out the last k volumes in test.tsv')
        synth.add_argument('--stack', type=int, default=None, help='stack depth recorded in the manifests')
        synth.set_defaults(handler=self.synth)

        train = subparsers.add_parser('train', help='train a network on a manifest')
        train.add_argument('--manifest', type=Path, required=True)
        train.add_argument('--out', type=Path, required=True, help='checkpoint path')
        train.add_argument('--classes', type=int, help='L, including background')
        train.add_argument('--stack', type=int, default=10, help='S, depth-as-channel stack')
        train.add_argument('--epochs', type=int, default=None)
        train.add_argument('--base-lr', type=float, default=0.01)
        train.add_argument('--batch-size', type=int, default=4)
        train.add_argument('--seed', type=int, default=0)
        train.add_argument('--channels', type=int, default=64)
        train.add_argument('--codewords', type=int, default=32)
        train.add_argument('--dropout', type=float, default=0.1)
        train.add_argument('--input-mode', choices=['fused', '2d'], default='fused')
        train.add_argument('--decoder-blocks', type=int, default=4)
        train.add_argument('--decoder-block', choices=['dense', 'conv'], default='dense')
        train.add_argument('--class-weights', action='store_true', help='median-frequency class weights')
        train.add_argument('--normalize', action='store_true', help='min-max normalize intensities')
        train.add_argument('--lambda-ce', type=float, default=1.0)
        train.add_argument('--lambda-dice', type=float, default=1.0)
        train.add_argument('--lambda-sec', type=float, default=0.1)
        train.add_argument('--resume', type=Path, help='continue from a checkpoint')
        train.add_argument('--keep-snapshots', type=int, default=0,
                           help='also keep the last N per-epoch checkpoints beside --out')
        train.set_defaults(handler=self.train)

        infer = subparsers.add_parser('infer', help='segment a volume with a trained checkpoint')
        infer.add_argument('--ckpt', type=Path, required=True)
        infer.add_argument('--in', dest='input', type=Path, required=True)
        infer.add_argument('--out', type=Path, required=True)
        infer.add_argument('--gamma-out', type=Path, help='write per-plane scaling factors as JSON')
        infer.add_argument('--normalize', action='store_true')
        infer.add_argument('--workers', type=int, default=None, help='worker cap (default FFCE_THREADS)')
        infer.set_defaults(handler=self.infer)

    def synth(self, args: argparse.Namespace) -> int:
        dataset = generate_synthetic_dataset(
            seed=args.seed, num_volumes=args.volumes, dims=args.dims, num_classes=args.classes,
            out_dir=args.out, test_volumes=args.test_volumes, stack_depth=args.stack,
        )
        print(f"wrote {len(dataset.volume_paths)} volume pairs; manifest {dataset.train_manifest}")
        return 0

    def train(self, args: argparse.Namespace) -> int:
        if args.resume:
            trainer = Trainer.from_checkpoint(args.resume, checkpoint_path=args.out,
                                             keep_snapshots=args.keep_snapshots)
            logger.info(f"Resuming from {args.resume} at epoch {trainer.epoch}")
        else:
            if args.classes is None:
                raise UsageError('train: --classes is required unless --resume is given')
            network_config = NetworkConfig(
                num_classes=args.classes, stack_depth=args.stack, channels=args.channels,
                codewords=args.codewords, dropout_rate=args.dropout, input_mode=args.input_mode,
                num_dec_blocks=args.decoder_blocks, decoder_block=args.decoder_block,
            )
            train_config = TrainConfig(
                base_lr=args.base_lr, batch_size=args.batch_size, epochs=args.epochs or 100, seed=args.seed,
                class_weights_enabled=args.class_weights, normalize=args.normalize,
                loss_weights=LossWeights(lambda_ce=args.lambda_ce, lambda_dice=args.lambda_dice,
                                         lambda_sec=args.lambda_sec),
            )
            trainer = Trainer.create(network_config, train_config, checkpoint_path=args.out,
                                     keep_snapshots=args.keep_snapshots)

        network_config = trainer.network_config
        dataset = SliceDataset.from_manifest(args.manifest, network_config.stack_depth,
                                             network_config.num_classes, trainer.config.normalize)
        logger.info(f"Training on {len(dataset)} slices, {trainer.params.num_elements()} parameters")
        trainer.fit(dataset, epochs=args.epochs)
        trainer.save_checkpoint(args.out)

        last = trainer.history[-1] if trainer.history else None
        summary = f"epoch {trainer.epoch}, final loss {last.total:.6f}" if last else f"epoch {trainer.epoch}"
        print(f"checkpoint {args.out}: {summary}")
        return 0

    def infer(self, args: argparse.Namespace) -> int:
        params = load_model(args.ckpt)
        volume = read_volume(args.input)
        if not isinstance(volume, Volume):
            raise DataFormatError("expected a float32 intensity volume", path=str(args.input))
        result = segment_volume(volume, params, normalize=args.normalize, workers=args.workers)
        write_volume(result.prediction, args.out)
        if args.gamma_out:
            _write_json(result.to_dict(), args.gamma_out)
        print(f"segmented {volume.dims} in {result.seconds:.2f}s -> {args.out}")
        return 0


def setup(subparsers) -> None:
    PipelineCommands().register(subparsers)
