"""
FFCE Segmenter - Reports
JSON and CSV renderings of Dice metrics.
"""

import csv
import io
import json
import logging
from enum import Enum
from pathlib import Path
from typing import Union

from core.error_monitor import DataFormatError, InvalidInputError
from inference.metrics import MetricsReport

logger = logging.getLogger(__name__)


class ReportFormat(Enum):
    """Supported report formats"""
    JSON = "json"
    CSV = "csv"


def _as_format(value: Union[str, ReportFormat]) -> ReportFormat:
    try:
        return ReportFormat(value)
    except ValueError:
        raise InvalidInputError(f"unknown report format {value!r} (expected json or csv)") from None


def render_report(metrics: MetricsReport, report_format: Union[str, ReportFormat]) -> str:
    """Report text; the same metrics always render to the same bytes."""
    report_format = _as_format(report_format)
    if report_format is ReportFormat.JSON:
        return json.dumps(metrics.to_dict(), sort_keys=True, indent=2) + '\n'

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['class', 'dice', 'gt_voxels', 'pred_voxels'])
    for label in metrics.included_classes:
        pred_count = metrics.pred_voxel_counts[label] if metrics.pred_voxel_counts else ''
        writer.writerow([label, repr(metrics.per_class[label]), metrics.voxel_counts[label], pred_count])
    writer.writerow(['MEAN', repr(metrics.mean_dice), '', ''])
    return buffer.getvalue()


def emit_report(metrics: MetricsReport, report_format: Union[str, ReportFormat],
                path: Union[str, Path]) -> Path:
    """
    Write a metrics report.

    Args:
        metrics: Evaluation results
        report_format: 'json' or 'csv'
        path: Destination file

    Returns:
        The written path
    """
    text = render_report(metrics, report_format)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding='utf-8')
    except OSError as e:
        raise DataFormatError(f"writing report failed: {e.strerror or e}", path=str(path)) from e
    logger.info(f"Report written: {path}")
    return path


def load_metrics(path: Union[str, Path]) -> MetricsReport:
    """Read a JSON report back into a MetricsReport."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except OSError as e:
        raise DataFormatError(f"reading metrics failed: {e.strerror or e}", path=str(path)) from e
    except json.JSONDecodeError as e:
        raise DataFormatError(f"metrics file is not JSON: {e.msg}", offset=e.pos, path=str(path)) from None
    return MetricsReport.from_dict(data)
