"""
FFCE Segmenter - Error Taxonomy and Monitoring
Categorized exceptions, error recording, and the mapping from error category
to command-line exit code.
"""

import hashlib
import logging
import traceback
from collections import defaultdict, deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Deque, Dict, List, Optional

import pydantic

logger = logging.getLogger(__name__)


class ErrorSeverity(Enum):
    """Error severity levels for categorization"""
    LOW = "low"           # Bad input from the caller, nothing to fix in the tool
    MEDIUM = "medium"     # Bad data or configuration on disk
    HIGH = "high"         # Numerical failure, results cannot be trusted
    CRITICAL = "critical" # Unexpected internal failure


class ErrorCategory(Enum):
    """Error categories for better organization and handling"""
    USAGE = "usage"
    CONFIGURATION = "configuration"
    DATA_FORMAT = "data_format"
    SHAPE = "shape"
    VALIDATION = "validation"
    NUMERICAL = "numerical"
    INTERNAL = "internal"


# Exit codes per category; 1 means "fix your command line", 2 means "fix your data"
EXIT_CODES: Dict[ErrorCategory, int] = {
    ErrorCategory.USAGE: 1,
    ErrorCategory.CONFIGURATION: 1,
    ErrorCategory.DATA_FORMAT: 2,
    ErrorCategory.SHAPE: 2,
    ErrorCategory.VALIDATION: 2,
    ErrorCategory.NUMERICAL: 2,
    ErrorCategory.INTERNAL: 2,
}


class FFCEError(Exception):
    """Base class for every error raised deliberately by this package."""
    category: ErrorCategory = ErrorCategory.INTERNAL


class UsageError(FFCEError):
    """Unknown subcommand, unknown flag, or missing required flag."""
    category = ErrorCategory.USAGE


class ConfigurationError(FFCEError):
    """Configuration values that are individually valid but inconsistent."""
    category = ErrorCategory.CONFIGURATION


class DataFormatError(FFCEError):
    """Malformed MVOL / FFCK / manifest content."""
    category = ErrorCategory.DATA_FORMAT

    def __init__(self, message: str, offset: Optional[int] = None, path: Optional[str] = None):
        location = []
        if path is not None:
            location.append(str(path))
        if offset is not None:
            location.append(f"byte offset {offset}")
        full = f"{message} ({', '.join(location)})" if location else message
        super().__init__(full)
        self.offset = offset
        self.path = path


class ShapeError(FFCEError, ValueError):
    """Tensor or volume extents that an operation cannot accept."""
    category = ErrorCategory.SHAPE


class InvalidInputError(FFCEError, ValueError):
    """Values outside an operation's domain (labels >= L, rates outside [0,1), ...)."""
    category = ErrorCategory.VALIDATION


class GradientCheckFailure(FFCEError):
    """An oracle in the gradient-check suite exceeded its tolerance."""
    category = ErrorCategory.NUMERICAL


@dataclass
class ErrorContext:
    """Context information for error tracking"""
    command_name: Optional[str] = None
    operation: Optional[str] = None
    path: Optional[str] = None
    additional_data: Dict[str, Any] = field(default_factory=dict)


@dataclass
class ErrorRecord:
    """Individual error record with full context"""
    error_id: str
    timestamp: datetime
    error_type: str
    error_message: str
    severity: ErrorSeverity
    category: ErrorCategory
    context: ErrorContext
    exit_code: int
    stack_trace: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        """Convert error record to dictionary for serialization"""
        return {
            'error_id': self.error_id,
            'timestamp': self.timestamp.isoformat(),
            'error_type': self.error_type,
            'error_message': self.error_message,
            'severity': self.severity.value,
            'category': self.category.value,
            'exit_code': self.exit_code,
            'context': {
                'command_name': self.context.command_name,
                'operation': self.context.operation,
                'path': self.context.path,
                'additional_data': self.context.additional_data,
            },
            'stack_trace': self.stack_trace,
        }


class ErrorMonitor:
    """
    Records errors that reach a command boundary and decides how the process
    should exit because of them.
    """

    def __init__(self, max_errors: int = 1000):
        """
        Initialize the error monitor.

        Args:
            max_errors: Maximum number of errors to keep in memory
        """
        self._errors: Deque[ErrorRecord] = deque(maxlen=max_errors)
        self._category_counts: Dict[ErrorCategory, int] = defaultdict(int)
        self._severity_counts: Dict[ErrorSeverity, int] = defaultdict(int)

    def _generate_error_id(self, error_type: str, context: ErrorContext) -> str:
        """Generate a short stable ID from the error type and where it happened"""
        context_str = f"{error_type}:{context.command_name}:{context.operation}:{context.path}"
        return hashlib.md5(context_str.encode()).hexdigest()[:8]

    def categorize(self, error: BaseException) -> ErrorCategory:
        """Categorize an error based on its type"""
        if isinstance(error, FFCEError):
            return error.category
        if isinstance(error, pydantic.ValidationError):
            return ErrorCategory.CONFIGURATION
        if isinstance(error, OSError):
            return ErrorCategory.DATA_FORMAT
        return ErrorCategory.INTERNAL

    def _determine_severity(self, category: ErrorCategory) -> ErrorSeverity:
        """Determine error severity from its category"""
        if category in (ErrorCategory.USAGE, ErrorCategory.CONFIGURATION):
            return ErrorSeverity.LOW
        if category in (ErrorCategory.DATA_FORMAT, ErrorCategory.SHAPE, ErrorCategory.VALIDATION):
            return ErrorSeverity.MEDIUM
        if category == ErrorCategory.NUMERICAL:
            return ErrorSeverity.HIGH
        return ErrorSeverity.CRITICAL

    def exit_code_for(self, error: BaseException) -> int:
        """Exit code the CLI should return for this error."""
        return EXIT_CODES[self.categorize(error)]

    def record_error(self, error: BaseException, context: Optional[ErrorContext] = None) -> ErrorRecord:
        """
        Record an error with full context and categorization.

        Args:
            error: The exception that occurred
            context: Context information about where the error occurred

        Returns:
            The stored ErrorRecord
        """
        context = context or ErrorContext()
        category = self.categorize(error)
        severity = self._determine_severity(category)

        stack_trace = None
        if severity == ErrorSeverity.CRITICAL:
            stack_trace = ''.join(traceback.format_exception(type(error), error, error.__traceback__))

        record = ErrorRecord(
            error_id=self._generate_error_id(type(error).__name__, context),
            timestamp=datetime.now(timezone.utc),
            error_type=type(error).__name__,
            error_message=str(error),
            severity=severity,
            category=category,
            context=context,
            exit_code=EXIT_CODES[category],
            stack_trace=stack_trace,
        )
        self._errors.append(record)
        self._category_counts[category] += 1
        self._severity_counts[severity] += 1

        if severity == ErrorSeverity.CRITICAL:
            logger.error(f"Unexpected error in {context.command_name or 'ffce'}: {error}\n{stack_trace}")
        else:
            logger.debug(f"Recorded {category.value} error {record.error_id}: {error}")
        return record

    def get_recent_errors(self, limit: int = 10) -> List[Dict[str, Any]]:
        """Get the most recent error records as dictionaries"""
        return [record.to_dict() for record in list(self._errors)[-limit:]]

    def get_error_summary(self) -> Dict[str, Any]:
        """Get error counts by category and severity"""
        return {
            'total_errors': len(self._errors),
            'by_category': {category.value: count for category, count in self._category_counts.items()},
            'by_severity': {severity.value: count for severity, count in self._severity_counts.items()},
        }

    def clear(self) -> None:
        """Forget all recorded errors"""
        self._errors.clear()
        self._category_counts.clear()
        self._severity_counts.clear()


# Global error monitor instance
error_monitor = ErrorMonitor()
