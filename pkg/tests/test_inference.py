import json

import numpy as np
import pytest

from core.error_monitor import DataFormatError, InvalidInputError, ShapeError
from data.samples import LabelVolume, Volume
from inference import (
    MetricsReport,
    dice_score,
    emit_report,
    evaluate_dice,
    load_metrics,
    render_report,
    segment_volume,
)


def _labels(values):
    return LabelVolume(np.asarray(values, dtype=np.uint16).reshape(1, 1, -1))


# segmentation

def test_segment_volume_keeps_dims(phantom, tiny_params):
    volume, _ = phantom
    result = segment_volume(volume, tiny_params, workers=1)
    assert result.prediction.dims == volume.dims
    assert result.prediction.labels.max() < 3
    assert result.gammas.shape == (4, 3)
    assert np.all((result.gammas > 0) & (result.gammas < 1))
    assert result.prediction.id == 'phantom_pred'


def test_segment_volume_is_independent_of_worker_count(phantom, tiny_params):
    volume, _ = phantom
    serial = segment_volume(volume, tiny_params, workers=1)
    parallel = segment_volume(volume, tiny_params, workers=3)
    np.testing.assert_array_equal(serial.prediction.labels, parallel.prediction.labels)
    np.testing.assert_array_equal(serial.gammas, parallel.gammas)


def test_segment_volume_rejects_indivisible_planes(tiny_params):
    with pytest.raises(ShapeError):
        segment_volume(Volume(np.zeros((2, 12, 16))), tiny_params)


# Dice

def test_dice_identical_volumes():
    labels = _labels([0, 1, 2, 2, 1])
    report = evaluate_dice(labels, labels, num_classes=3)
    assert report.per_class == [1.0, 1.0, 1.0]
    assert report.mean_dice == 1.0
    assert report.included_classes == [1, 2]


def test_dice_disjoint_masks():
    assert dice_score(np.array([1, 0], dtype=bool), np.array([0, 1], dtype=bool)) == 0.0


def test_dice_partial_overlap():
    report = evaluate_dice(_labels([1, 0]), _labels([1, 1]), num_classes=2)
    assert report.per_class[1] == pytest.approx(2 / 3, abs=1e-4)
    assert report.mean_dice == pytest.approx(0.6667, abs=1e-4)


def test_dice_is_symmetric(rng):
    pred = LabelVolume(rng.integers(0, 4, size=(2, 5, 5)))
    gt = LabelVolume(rng.integers(0, 4, size=(2, 5, 5)))
    forward, backward = evaluate_dice(pred, gt, 4), evaluate_dice(gt, pred, 4)
    assert forward.per_class == backward.per_class


def test_dice_absent_class_is_excluded():
    report = evaluate_dice(_labels([0, 1, 1]), _labels([0, 1, 0]), num_classes=4)
    assert report.per_class[2] is None and report.per_class[3] is None
    assert report.included_classes == [1]
    assert report.voxel_counts == [2, 1, 0, 0]
    assert report.pred_voxel_counts == [1, 2, 0, 0]


def test_dice_only_background_scores_one():
    report = evaluate_dice(_labels([0, 0]), _labels([0, 0]), num_classes=3)
    assert report.included_classes == []
    assert report.mean_dice == 1.0


def test_dice_rejects_mismatched_inputs():
    with pytest.raises(ShapeError):
        evaluate_dice(_labels([0, 1]), _labels([0, 1, 1]))
    with pytest.raises(InvalidInputError):
        evaluate_dice(_labels([0, 3]), _labels([0, 1]), num_classes=2)


# reports

def _metrics():
    return evaluate_dice(_labels([0, 1, 2, 2, 1, 0]), _labels([0, 1, 2, 1, 1, 0]), num_classes=3,
                         runtime_seconds=1.5)


def test_csv_report_rows():
    rows = render_report(_metrics(), 'csv').splitlines()
    assert rows[0] == 'class,dice,gt_voxels,pred_voxels'
    assert [row.split(',')[0] for row in rows[1:]] == ['1', '2', 'MEAN']
    assert rows[2].split(',')[2:] == ['1', '2']


def test_reports_are_byte_identical(tmp_path):
    for report_format in ('json', 'csv'):
        first = emit_report(_metrics(), report_format, tmp_path / f'a.{report_format}')
        second = emit_report(_metrics(), report_format, tmp_path / f'b.{report_format}')
        assert first.read_bytes() == second.read_bytes()


def test_json_report_matches_csv(tmp_path):
    metrics = _metrics()
    data = json.loads(render_report(metrics, 'json'))
    mean_row = render_report(metrics, 'csv').splitlines()[-1].split(',')
    assert data['mean_dice'] == float(mean_row[1])
    assert data['runtime_seconds'] == 1.5
    assert data['num_classes'] == 3


def test_json_report_loads_back(tmp_path):
    metrics = _metrics()
    loaded = load_metrics(emit_report(metrics, 'json', tmp_path / 'm.json'))
    assert loaded == metrics


def test_unknown_format_is_rejected():
    with pytest.raises(InvalidInputError):
        render_report(_metrics(), 'xml')


def test_load_metrics_rejects_bad_files(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text('{"per_class": [1.0')
    with pytest.raises(DataFormatError):
        load_metrics(path)
    path.write_text('{"per_class": []}')
    with pytest.raises(InvalidInputError):
        load_metrics(path)


def test_metrics_report_from_dict_keeps_nones():
    report = MetricsReport.from_dict({'per_class': [1.0, None], 'mean_dice': 1.0, 'voxel_counts': [3, 0]})
    assert report.per_class == [1.0, None]
    assert report.num_classes == 2
