"""
FFCE Segmenter - Resource Monitoring
Process and system memory/CPU snapshots taken at training and inference
checkpoints, with threshold warnings.
"""

import logging
from collections import deque
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, List, Optional

import psutil

logger = logging.getLogger(__name__)


class AlertLevel(Enum):
    """Alert severity levels"""
    WARNING = "warning"
    CRITICAL = "critical"


@dataclass
class ResourceMetrics:
    """Resource usage at one point in time"""
    process_rss_mb: float
    process_cpu_percent: float
    system_memory_percent: float
    system_available_mb: float
    label: str
    timestamp: datetime

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary"""
        return {
            'process_rss_mb': round(self.process_rss_mb, 2),
            'process_cpu_percent': round(self.process_cpu_percent, 2),
            'system_memory_percent': round(self.system_memory_percent, 2),
            'system_available_mb': round(self.system_available_mb, 2),
            'label': self.label,
            'timestamp': self.timestamp.isoformat(),
        }


class ResourceMonitor:
    """
    Samples resource usage on demand. Sampling never blocks: CPU percent is
    measured since the previous sample of this process.
    """

    def __init__(self, max_history: int = 100):
        self._process = psutil.Process()
        self._process.cpu_percent(interval=None)  # prime the CPU counter

        # System memory thresholds (percent)
        self._thresholds = {
            AlertLevel.WARNING: 85.0,
            AlertLevel.CRITICAL: 95.0,
        }
        self._metrics_history: deque = deque(maxlen=max_history)
        self._stats = {
            'total_measurements': 0,
            'alerts_generated': 0,
            'peak_rss_mb': 0.0,
        }

    def sample(self, label: str = '') -> ResourceMetrics:
        """
        Take a snapshot and log a warning when system memory crosses a threshold.

        Args:
            label: What was just finished (e.g. 'epoch 3', 'vol_000')

        Returns:
            The snapshot, also kept in history
        """
        try:
            memory = psutil.virtual_memory()
            metrics = ResourceMetrics(
                process_rss_mb=self._process.memory_info().rss / 1024 / 1024,
                process_cpu_percent=self._process.cpu_percent(interval=None),
                system_memory_percent=memory.percent,
                system_available_mb=memory.available / 1024 / 1024,
                label=label,
                timestamp=datetime.now(timezone.utc),
            )
        except psutil.Error as e:
            logger.error(f"Error getting resource metrics: {e}")
            metrics = ResourceMetrics(0.0, 0.0, 0.0, 0.0, label, datetime.now(timezone.utc))

        self._metrics_history.append(metrics)
        self._stats['total_measurements'] += 1
        self._stats['peak_rss_mb'] = max(self._stats['peak_rss_mb'], metrics.process_rss_mb)

        level = self._alert_level(metrics.system_memory_percent)
        if level is not None:
            self._stats['alerts_generated'] += 1
            logger.warning(f"System memory at {metrics.system_memory_percent:.1f}% "
                           f"({level.value}) after {label or 'sample'}")
        return metrics

    def _alert_level(self, percent: float) -> Optional[AlertLevel]:
        if percent >= self._thresholds[AlertLevel.CRITICAL]:
            return AlertLevel.CRITICAL
        if percent >= self._thresholds[AlertLevel.WARNING]:
            return AlertLevel.WARNING
        return None

    def set_threshold(self, alert_level: AlertLevel, threshold: float) -> None:
        self._thresholds[alert_level] = threshold
        logger.info(f"Set memory {alert_level.value} threshold to {threshold}%")

    def get_recent_metrics(self, limit: int = 20) -> List[Dict[str, Any]]:
        """Get recent resource metrics"""
        return [m.to_dict() for m in list(self._metrics_history)[-limit:]]

    def get_monitoring_stats(self) -> Dict[str, Any]:
        """Get monitoring statistics"""
        return {
            'total_measurements': self._stats['total_measurements'],
            'alerts_generated': self._stats['alerts_generated'],
            'peak_rss_mb': round(self._stats['peak_rss_mb'], 2),
        }


# Global resource monitor instance
resource_monitor = ResourceMonitor()
