import threading

import pydantic
import pytest

from core.error_monitor import (
    ConfigurationError,
    DataFormatError,
    ErrorCategory,
    ErrorContext,
    ErrorMonitor,
    ErrorSeverity,
    GradientCheckFailure,
    InvalidInputError,
    ShapeError,
    UsageError,
)
from core.resource_monitor import AlertLevel, ResourceMonitor
from core.task_manager import TaskManager, TaskStatus
from network.config import NetworkConfig
from utils.settings import SettingsManager


# error monitor

@pytest.mark.parametrize('error,exit_code', [
    (UsageError('bad flag'), 1),
    (ConfigurationError('bad config'), 1),
    (DataFormatError('bad magic', offset=0), 2),
    (ShapeError('bad shape'), 2),
    (InvalidInputError('bad value'), 2),
    (GradientCheckFailure('too large'), 2),
    (FileNotFoundError('gone'), 2),
    (RuntimeError('boom'), 2),
])
def test_exit_codes(error, exit_code):
    assert ErrorMonitor().exit_code_for(error) == exit_code


def test_pydantic_errors_are_configuration_errors():
    with pytest.raises(pydantic.ValidationError) as excinfo:
        NetworkConfig(num_classes=0)
    monitor = ErrorMonitor()
    assert monitor.categorize(excinfo.value) is ErrorCategory.CONFIGURATION
    assert monitor.exit_code_for(excinfo.value) == 1


def test_data_format_error_names_location():
    error = DataFormatError('bad magic', offset=0, path='a.mvol')
    assert str(error) == 'bad magic (a.mvol, byte offset 0)'
    assert str(DataFormatError('plain')) == 'plain'


def test_record_error_keeps_context_and_counts():
    monitor = ErrorMonitor(max_errors=2)
    record = monitor.record_error(ShapeError('x'), ErrorContext(command_name='infer', path='v.mvol'))
    assert record.exit_code == 2
    assert record.severity is ErrorSeverity.MEDIUM
    assert record.stack_trace is None
    assert record.to_dict()['context']['command_name'] == 'infer'

    try:
        raise RuntimeError('unexpected')
    except RuntimeError as e:
        internal = monitor.record_error(e)
    assert internal.severity is ErrorSeverity.CRITICAL
    assert 'RuntimeError' in internal.stack_trace

    monitor.record_error(UsageError('y'))
    assert len(monitor.get_recent_errors()) == 2
    summary = monitor.get_error_summary()
    assert summary['by_category'] == {'shape': 1, 'internal': 1, 'usage': 1}
    monitor.clear()
    assert monitor.get_error_summary()['total_errors'] == 0


# task manager

def test_map_ordered_preserves_order_across_workers():
    manager = TaskManager(max_workers=4)
    assert manager.map_ordered('square', lambda item: item * item, range(20)) == [i * i for i in range(20)]
    stats = manager.get_performance_stats()
    assert stats['successful_tasks'] == 1
    assert stats['total_items'] == 20
    assert stats['max_workers'] == 4


def test_map_ordered_single_worker_runs_inline():
    manager = TaskManager(max_workers=1)
    names = manager.map_ordered('inline', lambda _: threading.current_thread().name, range(3))
    assert set(names) == {threading.current_thread().name}


def test_map_ordered_propagates_failures():
    manager = TaskManager(max_workers=2)

    def work(item):
        if item == 3:
            raise ShapeError('plane 3')
        return item

    with pytest.raises(ShapeError, match='plane 3'):
        manager.map_ordered('failing', work, range(5))
    failed = manager.get_all_tasks(TaskStatus.FAILED)
    assert len(failed) == 1 and failed[0]['last_error'] == 'plane 3'
    assert manager.get_performance_stats()['failed_tasks'] == 1


def test_empty_work_list():
    assert TaskManager(max_workers=3).map_ordered('nothing', str, []) == []


# resource monitor

def test_resource_sample_records_history():
    monitor = ResourceMonitor(max_history=2)
    for label in ('a', 'b', 'c'):
        metrics = monitor.sample(label)
    assert metrics.process_rss_mb > 0
    assert [entry['label'] for entry in monitor.get_recent_metrics()] == ['b', 'c']
    stats = monitor.get_monitoring_stats()
    assert stats['total_measurements'] == 3
    assert stats['peak_rss_mb'] >= metrics.process_rss_mb - 0.01


def test_resource_alert_thresholds():
    monitor = ResourceMonitor()
    monitor.set_threshold(AlertLevel.WARNING, 0.0)
    monitor.sample('forced')
    assert monitor.get_monitoring_stats()['alerts_generated'] == 1


# settings

def test_settings_read_environment(monkeypatch):
    monkeypatch.setenv('FFCE_THREADS', '3')
    monkeypatch.setenv('FFCE_LOG_LEVEL', 'debug')
    settings = SettingsManager()
    assert settings.threads == 3
    assert settings.log_level == 'DEBUG'
    assert settings.to_dict() == {'threads': 3, 'log_level': 'DEBUG'}


@pytest.mark.parametrize('raw', ['zero', '0', '-2'])
def test_invalid_thread_count_falls_back(monkeypatch, raw):
    monkeypatch.setenv('FFCE_THREADS', raw)
    assert SettingsManager().threads >= 1


def test_invalid_log_level_falls_back(monkeypatch):
    monkeypatch.setenv('FFCE_LOG_LEVEL', 'chatty')
    assert SettingsManager().log_level == 'INFO'


def test_task_manager_follows_settings(monkeypatch):
    from utils.settings import settings

    monkeypatch.setenv('FFCE_THREADS', '2')
    settings.reload()
    try:
        assert TaskManager().max_workers == 2
    finally:
        monkeypatch.delenv('FFCE_THREADS', raising=False)
        settings.reload()
