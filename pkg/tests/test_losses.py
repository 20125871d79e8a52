import math

import numpy as np
import pytest

from autograd import Tensor
from core.error_monitor import InvalidInputError, ShapeError
from network.model import FFCEOutput
from training.config import LossWeights
from training.losses import (
    class_frequencies,
    composite_loss,
    compute_class_weights,
    median_frequency_weights,
    multiclass_dice_loss,
    one_hot,
    sec_loss,
    weighted_cross_entropy,
)


def _probs(values):
    return Tensor(np.asarray(values, dtype=np.float64))


def _perfect(gt, num_classes):
    return _probs(one_hot(gt, num_classes, np.float64))


# cross-entropy

def test_cross_entropy_perfect_prediction_is_zero():
    gt = np.array([[0, 1], [2, 1]])
    assert weighted_cross_entropy(_perfect(gt, 3), gt, np.array([0.5, 2.0, 3.0])).item() == pytest.approx(0.0, abs=1e-12)


def test_cross_entropy_single_pixel_half_probability():
    loss = weighted_cross_entropy(_probs(np.full((2, 1, 1), 0.5)), np.zeros((1, 1), dtype=int), np.ones(2))
    assert loss.item() == pytest.approx(math.log(2), abs=1e-9)


def test_cross_entropy_weights_scale_by_true_class():
    probs = _probs(np.full((2, 1, 2), 0.5))
    gt = np.array([[0, 1]])
    unweighted = weighted_cross_entropy(probs, gt).item()
    weighted = weighted_cross_entropy(probs, gt, np.array([2.0, 2.0])).item()
    assert weighted == pytest.approx(2 * unweighted)
    only_first = weighted_cross_entropy(probs, gt, np.array([1.0, 0.0])).item()
    assert only_first == pytest.approx(math.log(2) / 2)


def test_cross_entropy_rejects_bad_labels():
    with pytest.raises(InvalidInputError):
        weighted_cross_entropy(_probs(np.full((2, 1, 1), 0.5)), np.array([[2]]))
    with pytest.raises(ShapeError):
        weighted_cross_entropy(_probs(np.full((2, 1, 1), 0.5)), np.zeros((2, 2), dtype=int))


# Dice

def test_dice_perfect_overlap_is_minus_one():
    gt = np.array([[0, 1], [1, 0]])
    # class 2 is absent from both prediction and truth
    loss = multiclass_dice_loss(_perfect(gt, 3), one_hot(gt, 3, np.float64)).item()
    assert loss == pytest.approx(-1.0, abs=1e-6)


def test_dice_single_pixel_half_probability():
    loss = multiclass_dice_loss(_probs(np.full((2, 1, 1), 0.5)), np.array([[[1.0]], [[0.0]]]))
    assert loss.item() == pytest.approx(-0.4, abs=1e-6)


def test_dice_stays_within_bounds(rng):
    logits = rng.standard_normal((2, 4, 5, 5))
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    gt = rng.integers(0, 4, size=(2, 5, 5))
    loss = multiclass_dice_loss(_probs(probs), one_hot(gt, 4, np.float64)).item()
    assert -1.0 <= loss <= 0.0


def test_dice_rejects_non_one_hot_target():
    with pytest.raises(InvalidInputError):
        multiclass_dice_loss(_probs(np.full((2, 1, 1), 0.5)), np.array([[[1.0]], [[1.0]]]))


# semantic encoding classification

def test_sec_zero_logits_give_ln2():
    assert sec_loss(_probs(np.zeros(5)), np.array([1, 0, 0, 1, 0])).item() == pytest.approx(math.log(2))


def test_sec_saturated_logit_vanishes():
    assert sec_loss(_probs([30.0]), np.array([1])).item() < 1e-12


def test_sec_is_symmetric_under_sign_flip(rng):
    logits = rng.standard_normal(6)
    presence = rng.integers(0, 2, size=6)
    direct = sec_loss(_probs(logits), presence).item()
    flipped = sec_loss(_probs(-logits), 1 - presence).item()
    assert direct == pytest.approx(flipped)


def test_sec_rejects_non_binary_presence():
    with pytest.raises(InvalidInputError):
        sec_loss(_probs(np.zeros(2)), np.array([0, 2]))


# composite

def _output(probs, sec_logits):
    probs, sec_logits = _probs(probs), _probs(sec_logits)
    return FFCEOutput(logits=probs, gamma=sec_logits, sec_logits=sec_logits, probs=probs, raw_logits=probs)


def test_composite_with_only_cross_entropy(rng):
    logits = rng.standard_normal((1, 3, 4, 4))
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    gt = rng.integers(0, 3, size=(1, 4, 4))
    output = _output(probs, rng.standard_normal((1, 3)))
    report = composite_loss(output, gt, np.array([[1, 1, 0]]),
                            weights=LossWeights(lambda_ce=1.0, lambda_dice=0.0, lambda_sec=0.0))
    assert report.total_value == pytest.approx(report.ce)
    assert report.ce == pytest.approx(weighted_cross_entropy(_probs(probs), gt).item())


def test_composite_perfect_prediction_defaults():
    gt = np.array([[[0, 1], [1, 0]]])
    presence = np.array([[1, 1, 0]])
    output = _output(one_hot(gt, 3, np.float64), np.where(presence == 1, 30.0, -30.0))
    report = composite_loss(output, gt, presence)
    assert report.ce == pytest.approx(0.0, abs=1e-9)
    assert report.dice == pytest.approx(-1.0, abs=1e-6)
    assert report.sec < 1e-12
    assert report.total_value == pytest.approx(-1.0, abs=1e-6)
    assert set(report.to_dict()) == {'total', 'ce', 'dice', 'sec'}


def test_composite_total_is_weighted_sum(rng):
    logits = rng.standard_normal((2, 3, 4, 4))
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    gt = rng.integers(0, 3, size=(2, 4, 4))
    weights = LossWeights(lambda_ce=0.5, lambda_dice=2.0, lambda_sec=0.3)
    report = composite_loss(_output(probs, rng.standard_normal((2, 3))), gt,
                            np.array([[1, 0, 1], [1, 1, 1]]), weights=weights)
    expected = 0.5 * report.ce + 2.0 * report.dice + 0.3 * report.sec
    assert report.total_value == pytest.approx(expected)


# class weights

def test_median_frequency_weights_example():
    np.testing.assert_allclose(median_frequency_weights(np.array([0.5, 0.3, 0.2])), [0.6, 1.0, 1.5])


def test_median_frequency_weights_uniform():
    np.testing.assert_allclose(median_frequency_weights(np.full(4, 0.25)), np.ones(4))


def test_absent_class_gets_largest_weight():
    weights = median_frequency_weights(np.array([0.5, 0.3, 0.2, 0.0]))
    assert weights[3] == pytest.approx(weights[:3].max())


def test_compute_class_weights_counts_all_volumes():
    volumes = [np.array([0, 0, 0, 1, 1, 2]), np.array([0, 0, 1, 2])]
    np.testing.assert_allclose(class_frequencies(volumes, 3), [0.5, 0.3, 0.2])
    np.testing.assert_allclose(compute_class_weights(volumes, 3), [0.6, 1.0, 1.5])


def test_class_weights_need_labels():
    with pytest.raises(InvalidInputError):
        compute_class_weights([], 3)
