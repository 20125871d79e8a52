"""
FFCE Segmenter - Core Systems
Error taxonomy, worker pool, resource sampling and checkpoint storage.
"""

from .error_monitor import (
    ConfigurationError,
    DataFormatError,
    ErrorCategory,
    ErrorSeverity,
    FFCEError,
    GradientCheckFailure,
    InvalidInputError,
    ShapeError,
    UsageError,
    error_monitor,
)
from .task_manager import task_manager, TaskStatus
from .resource_monitor import resource_monitor, AlertLevel
from .checkpoint_manager import checkpoint_manager, CheckpointStatus

__all__ = [
    'error_monitor', 'ErrorCategory', 'ErrorSeverity',
    'FFCEError', 'UsageError', 'ConfigurationError', 'DataFormatError',
    'ShapeError', 'InvalidInputError', 'GradientCheckFailure',
    'task_manager', 'TaskStatus',
    'resource_monitor', 'AlertLevel',
    'checkpoint_manager', 'CheckpointStatus',
]
