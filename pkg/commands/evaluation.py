"""
FFCE Segmenter - Evaluation Commands
eval, report and gradcheck: scoring predictions and verifying gradients.
"""

import argparse
import json
import logging
from pathlib import Path

from core.error_monitor import DataFormatError, GradientCheckFailure
from data.samples import LabelVolume
from inference.metrics import evaluate_dice
from inference.reports import ReportFormat, emit_report, load_metrics
from utils.oracle_suite import run_oracle_suite
from volume_store import read_volume

logger = logging.getLogger(__name__)

FORMAT_CHOICES = [report_format.value for report_format in ReportFormat]


def _read_labels(path: Path) -> LabelVolume:
    volume = read_volume(path)
    if not isinstance(volume, LabelVolume):
        raise DataFormatError("expected a uint16 label volume", path=str(path))
    return volume


class EvaluationCommands:
    """Scoring, report and verification subcommands"""

    def register(self, subparsers) -> None:
        evaluate = subparsers.add_parser('eval', help='Dice of a prediction against ground truth')
        evaluate.add_argument('--pred', type=Path, required=True)
        evaluate.add_argument('--gt', type=Path, required=True)
        evaluate.add_argument('--report', type=Path, required=True)
        evaluate.add_argument('--format', choices=FORMAT_CHOICES, default='json')
        evaluate.add_argument('--classes', type=int, default=None, help='L; defaults to the labels seen')
        evaluate.set_defaults(handler=self.evaluate)

        report = subparsers.add_parser('report', help='re-render a JSON metrics report')
        report.add_argument('--metrics', type=Path, required=True)
        report.add_argument('--format', choices=FORMAT_CHOICES, default='csv')
        report.add_argument('--out', type=Path, required=True)
        report.set_defaults(handler=self.report)

        gradcheck = subparsers.add_parser('gradcheck', help='run the gradient and loss oracle suite')
        gradcheck.add_argument('--seeds', type=int, default=20)
        gradcheck.add_argument('--json', type=Path, help='write the oracle report here')
        gradcheck.add_argument('--network-params', type=int, default=24,
                               help='parameters sampled per seed in the full-network check (0 = all)')
        gradcheck.add_argument('--skip-network', action='store_true')
        gradcheck.set_defaults(handler=self.gradcheck)

    def evaluate(self, args: argparse.Namespace) -> int:
        pred, gt = _read_labels(args.pred), _read_labels(args.gt)
        metrics = evaluate_dice(pred, gt, num_classes=args.classes)
        emit_report(metrics, args.format, args.report)
        print(f"mean Dice {metrics.mean_dice:.4f} over classes {metrics.included_classes}")
        return 0

    def report(self, args: argparse.Namespace) -> int:
        emit_report(load_metrics(args.metrics), args.format, args.out)
        return 0

    def gradcheck(self, args: argparse.Namespace) -> int:
        report = run_oracle_suite(
            seeds=args.seeds,
            network_params_per_seed=args.network_params or None,
            include_network=not args.skip_network,
        )
        if args.json:
            args.json.parent.mkdir(parents=True, exist_ok=True)
            args.json.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + '\n', encoding='utf-8')
        for name, value in sorted(report.worst().items()):
            print(f"{name:36s} {value:.3e}")
        if not report.passed:
            failed = sorted({failure.name for failure in report.failures()})
            raise GradientCheckFailure(f"{len(report.failures())} oracle checks failed: {', '.join(failed)}")
        print(f"all {len(report.results)} checks passed in {report.seconds:.1f}s")
        return 0


def setup(subparsers) -> None:
    EvaluationCommands().register(subparsers)
