"""
FFCE Segmenter - Task Manager
Bounded thread pool for independent work items (slice evaluation, sample
extraction) with per-task bookkeeping and performance statistics.
"""

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar

from utils.settings import settings

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


class TaskStatus(Enum):
    """Task execution status"""
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class TaskInfo:
    """Information about one batch of work items"""
    task_id: str
    name: str
    status: TaskStatus
    created_at: datetime
    item_count: int = 0
    workers: int = 1
    execution_time_ms: float = 0.0
    last_error: Optional[str] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        """Convert task info to dictionary"""
        return {
            'task_id': self.task_id,
            'name': self.name,
            'status': self.status.value,
            'created_at': self.created_at.isoformat(),
            'item_count': self.item_count,
            'workers': self.workers,
            'execution_time_ms': round(self.execution_time_ms, 2),
            'last_error': self.last_error,
            'metadata': self.metadata,
        }


class TaskManager:
    """
    Runs independent work items concurrently and hands results back in input
    order. Each work item owns its own computation graph; shared inputs
    (model parameters, volumes) must only be read.
    """

    def __init__(self, max_workers: Optional[int] = None, max_history: int = 200):
        """
        Initialize the task manager.

        Args:
            max_workers: Worker thread cap; defaults to FFCE_THREADS
            max_history: Number of TaskInfo records kept
        """
        self._max_workers = max_workers
        self._max_history = max_history
        self._task_info: Dict[str, TaskInfo] = {}
        self._counter = 0
        self._lock = threading.Lock()

        self._performance_stats = {
            'total_tasks_executed': 0,
            'successful_tasks': 0,
            'failed_tasks': 0,
            'total_items': 0,
            'avg_execution_time_ms': 0.0,
        }

    @property
    def max_workers(self) -> int:
        return self._max_workers or settings.threads

    def _generate_task_id(self, name: str) -> str:
        """Generate a unique task ID"""
        with self._lock:
            self._counter += 1
            counter = self._counter
        timestamp = datetime.now(timezone.utc).strftime("%Y%m%d_%H%M%S")
        return f"{name}_{timestamp}_{counter}"

    def _record(self, info: TaskInfo) -> None:
        with self._lock:
            self._task_info[info.task_id] = info
            while len(self._task_info) > self._max_history:
                self._task_info.pop(next(iter(self._task_info)))

    def map_ordered(self, name: str, fn: Callable[[T], R], items: Sequence[T],
                    workers: Optional[int] = None) -> List[R]:
        """
        Apply `fn` to every item, concurrently when more than one worker is
        allowed, and return the results in the order of `items`.

        Args:
            name: Label for logs and statistics
            fn: Work function; must not mutate shared state
            items: Work items
            workers: Override for the worker cap

        Returns:
            List of results aligned with `items`

        Raises:
            The first exception raised by any work item
        """
        items = list(items)
        workers = max(1, min(workers or self.max_workers, len(items) or 1))
        info = TaskInfo(
            task_id=self._generate_task_id(name), name=name, status=TaskStatus.RUNNING,
            created_at=datetime.now(timezone.utc), item_count=len(items), workers=workers,
        )
        self._record(info)
        start_time = time.perf_counter()
        try:
            if workers == 1:
                results = [fn(item) for item in items]
            else:
                with ThreadPoolExecutor(max_workers=workers, thread_name_prefix=name) as pool:
                    results = list(pool.map(fn, items))
        except Exception as e:
            info.status = TaskStatus.FAILED
            info.last_error = str(e)
            self._finish(info, start_time, success=False)
            logger.error(f"Task failed: {info.task_id} - {e}")
            raise

        info.status = TaskStatus.COMPLETED
        self._finish(info, start_time, success=True)
        logger.debug(f"Task completed: {info.task_id} ({len(items)} items, {workers} workers, "
                     f"{info.execution_time_ms:.2f}ms)")
        return results

    def _finish(self, info: TaskInfo, start_time: float, success: bool) -> None:
        info.execution_time_ms = (time.perf_counter() - start_time) * 1000
        with self._lock:
            stats = self._performance_stats
            stats['total_tasks_executed'] += 1
            stats['successful_tasks' if success else 'failed_tasks'] += 1
            stats['total_items'] += info.item_count
            total = stats['total_tasks_executed']
            stats['avg_execution_time_ms'] = (
                (stats['avg_execution_time_ms'] * (total - 1) + info.execution_time_ms) / total
            )

    def get_all_tasks(self, status_filter: Optional[TaskStatus] = None) -> List[Dict[str, Any]]:
        return [info.to_dict() for info in list(self._task_info.values())
                if status_filter is None or info.status == status_filter]

    def get_performance_stats(self) -> Dict[str, Any]:
        """Get task manager performance statistics"""
        stats = dict(self._performance_stats)
        stats['max_workers'] = self.max_workers
        stats['avg_execution_time_ms'] = round(stats['avg_execution_time_ms'], 2)
        stats['success_rate'] = round(stats['successful_tasks'] / max(1, stats['total_tasks_executed']) * 100, 2)
        return stats


# Global task manager instance
task_manager = TaskManager()
