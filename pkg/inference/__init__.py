"""
FFCE Segmenter - Inference
Whole-volume segmentation, Dice evaluation and reports.
"""

from inference.metrics import MetricsReport, dice_score, evaluate_dice
from inference.reports import ReportFormat, emit_report, load_metrics, render_report
from inference.segment import SegmentationResult, segment_volume
