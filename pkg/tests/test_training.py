import math

import numpy as np
import pydantic
import pytest

from autograd import Parameter
from core.error_monitor import ConfigurationError, DataFormatError, InvalidInputError, ShapeError
from data.dataset import SliceDataset
from data.samples import LabelVolume, Volume
from network.config import NetworkConfig
from training.config import LossWeights, TrainConfig
from training.optimizer import OptimizerState, poly_lr, sgd_step
from training.trainer import Trainer, load_model


def _param(value, grad):
    param = Parameter(np.array([value]), name='w', dtype=np.float64)
    param.grad = np.array([grad], dtype=np.float64)
    return param


def _same_state(first, second):
    for name, value in first.params.state_arrays().items():
        assert value.tobytes() == second.params.state_arrays()[name].tobytes(), name


# schedule and optimizer

def test_poly_lr_examples():
    assert poly_lr(0.01, 0, 100, 0.9) == 0.01
    assert poly_lr(0.01, 100, 100, 0.9) == 0.0
    assert poly_lr(0.01, 50, 100, 0.9) == pytest.approx(0.005359, abs=1e-6)


def test_poly_lr_is_non_increasing():
    rates = [poly_lr(0.02, i, 40, 0.9) for i in range(41)]
    assert all(a >= b for a, b in zip(rates, rates[1:]))


def test_poly_lr_rejects_iteration_past_total():
    with pytest.raises(InvalidInputError):
        poly_lr(0.01, 11, 10, 0.9)
    with pytest.raises(InvalidInputError):
        poly_lr(0.01, 0, 0, 0.9)


def test_sgd_plain_step():
    param = _param(1.0, 1.0)
    sgd_step([param], OptimizerState(), lr=0.1, momentum=0.0, weight_decay=0.0)
    assert param.data[0] == pytest.approx(0.9)


def test_sgd_weight_decay():
    param = _param(1.0, 0.0)
    sgd_step([param], OptimizerState(), lr=0.1, momentum=0.0, weight_decay=1e-4)
    assert param.data[0] == pytest.approx(0.99999)


def test_sgd_momentum_two_steps():
    param = _param(1.0, 1.0)
    state = OptimizerState()
    sgd_step([param], state, lr=0.1, momentum=0.9, weight_decay=0.0)
    assert param.data[0] == pytest.approx(0.9)
    sgd_step([param], state, lr=0.1, momentum=0.9, weight_decay=0.0)
    assert param.data[0] == pytest.approx(0.71)
    assert state.iteration == 2


def test_sgd_zero_gradient_is_fixed_point():
    param = _param(0.3, 0.0)
    param.grad = None
    sgd_step([param], OptimizerState(), lr=0.1, momentum=0.9, weight_decay=0.0)
    assert param.data[0] == 0.3


def test_sgd_rejects_mismatched_buffer():
    param = _param(1.0, 1.0)
    state = OptimizerState(momentum={'w': np.zeros(2)})
    with pytest.raises(ShapeError):
        sgd_step([param], state, lr=0.1, momentum=0.9, weight_decay=0.0)


def test_train_config_validation():
    with pytest.raises(pydantic.ValidationError):
        TrainConfig(base_lr=0.0)
    with pytest.raises(pydantic.ValidationError):
        TrainConfig(batch_size=0)
    with pytest.raises(pydantic.ValidationError):
        TrainConfig(learning_rate=0.1)
    assert TrainConfig().loss_weights == LossWeights(lambda_ce=1.0, lambda_dice=1.0, lambda_sec=0.1)


# trainer

def test_epoch_iteration_count(tiny_config, tiny_dataset):
    trainer = Trainer.create(tiny_config, TrainConfig(batch_size=3, epochs=2))
    report = trainer.train_epoch(tiny_dataset)
    assert report.iterations == math.ceil(len(tiny_dataset) / 3)
    assert trainer.state.iteration == 2
    assert trainer.epoch == 1


def test_training_is_deterministic(tiny_config, tiny_dataset):
    config = TrainConfig(batch_size=2, epochs=1, seed=11)
    first, second = Trainer.create(tiny_config, config), Trainer.create(tiny_config, config)
    first_report = first.fit(tiny_dataset)[0]
    second_report = second.fit(tiny_dataset)[0]
    assert first_report.total == second_report.total
    _same_state(first, second)


def test_composite_loss_decreases_on_single_sample(tiny_config, phantom):
    volume, labels = phantom
    dataset = SliceDataset([(Volume(volume.intensities[2:3], 'one'), LabelVolume(labels.labels[2:3], 3))],
                           stack_depth=2, num_classes=3)
    trainer = Trainer.create(tiny_config, TrainConfig(base_lr=0.05, batch_size=1, epochs=100))
    reports = trainer.fit(dataset, epochs=10)
    assert len(reports) == 10
    assert reports[-1].total < reports[0].total
    assert reports[-1].ce < reports[0].ce
    assert reports[-1].dice < reports[0].dice


def test_equal_class_frequencies_make_weighting_a_no_op(tiny_config, rng):
    labels = np.broadcast_to(np.arange(3, dtype=np.uint16)[:, None, None], (3, 16, 16))
    volume = Volume(rng.standard_normal((3, 16, 16)).astype(np.float32), 'balanced')
    dataset = SliceDataset([(volume, LabelVolume(labels.copy(), 3))], stack_depth=2, num_classes=3)

    plain = Trainer.create(tiny_config, TrainConfig(batch_size=2, epochs=2, seed=5))
    weighted = Trainer.create(tiny_config, TrainConfig(batch_size=2, epochs=2, seed=5, class_weights_enabled=True))
    plain.fit(dataset)
    weighted.fit(dataset)

    np.testing.assert_array_equal(weighted.class_weights, np.ones(3))
    assert [r.total for r in weighted.history] == [r.total for r in plain.history]
    _same_state(plain, weighted)


def test_fit_rejects_more_epochs_than_scheduled(tiny_config, tiny_dataset):
    trainer = Trainer.create(tiny_config, TrainConfig(epochs=1))
    with pytest.raises(InvalidInputError):
        trainer.fit(tiny_dataset, epochs=2)


def test_train_rejects_empty_and_mismatched_datasets(tiny_config, phantom):
    trainer = Trainer.create(tiny_config, TrainConfig(epochs=1))
    with pytest.raises(InvalidInputError):
        trainer.train_epoch(SliceDataset([], stack_depth=2, num_classes=3))
    with pytest.raises(ConfigurationError):
        trainer.train_epoch(SliceDataset([phantom], stack_depth=3, num_classes=3))


def test_class_weights_computed_on_first_epoch(tiny_config, tiny_dataset):
    trainer = Trainer.create(tiny_config, TrainConfig(epochs=1, class_weights_enabled=True))
    trainer.train_epoch(tiny_dataset)
    assert trainer.class_weights.shape == (3,)
    assert np.all(trainer.class_weights > 0)


# checkpoints

def test_checkpoint_roundtrip(tmp_path, tiny_config, tiny_dataset):
    trainer = Trainer.create(tiny_config, TrainConfig(batch_size=2, epochs=1))
    trainer.fit(tiny_dataset)
    path = trainer.save_checkpoint(tmp_path / 'run.ffck')
    restored = Trainer.from_checkpoint(path)
    _same_state(trainer, restored)
    assert restored.epoch == 1
    assert restored.state.iteration == trainer.state.iteration
    assert restored.config == trainer.config
    for name, buffer in trainer.state.momentum.items():
        assert buffer.tobytes() == restored.state.momentum[name].tobytes()
    assert restored.rng.bit_generator.state == trainer.rng.bit_generator.state
    np.testing.assert_array_equal(load_model(path).state_arrays()['param/classifier.kernel'],
                                  trainer.params['classifier.kernel'].data)


def test_resume_matches_uninterrupted_training(tmp_path, tiny_config, tiny_dataset):
    config = TrainConfig(batch_size=3, epochs=2, seed=4)
    uninterrupted = Trainer.create(tiny_config, config)
    uninterrupted.fit(tiny_dataset)

    interrupted = Trainer.create(tiny_config, config)
    interrupted.fit(tiny_dataset, epochs=1)
    interrupted.save_checkpoint(tmp_path / 'half.ffck')
    resumed = Trainer.from_checkpoint(tmp_path / 'half.ffck')
    resumed.fit(tiny_dataset)

    assert resumed.epoch == 2
    _same_state(uninterrupted, resumed)
    assert [r.total for r in resumed.history] == [r.total for r in uninterrupted.history]


def test_fit_writes_checkpoint_every_epoch(tmp_path, tiny_config, tiny_dataset):
    path = tmp_path / 'auto.ffck'
    trainer = Trainer.create(tiny_config, TrainConfig(batch_size=4, epochs=1), checkpoint_path=path)
    trainer.fit(tiny_dataset)
    assert Trainer.from_checkpoint(path).epoch == 1


def test_fit_keeps_newest_snapshots(tmp_path, tiny_config, tiny_dataset):
    trainer = Trainer.create(tiny_config, TrainConfig(batch_size=4, epochs=3),
                             checkpoint_path=tmp_path / 'run.ffck', keep_snapshots=2)
    trainer.fit(tiny_dataset)
    assert sorted(p.name for p in tmp_path.glob('*.ffck')) == ['run.ffck', 'run_epoch002.ffck', 'run_epoch003.ffck']


def test_load_rejects_other_network(tmp_path, tiny_config):
    path = Trainer.create(tiny_config, TrainConfig()).save_checkpoint(tmp_path / 'a.ffck')
    other = NetworkConfig(num_classes=4, stack_depth=2, channels=8, codewords=4)
    with pytest.raises(ConfigurationError):
        Trainer.create(other, TrainConfig()).load_checkpoint(path)


def test_load_rejects_truncated_checkpoint(tmp_path, tiny_config):
    path = Trainer.create(tiny_config, TrainConfig()).save_checkpoint(tmp_path / 'a.ffck')
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(DataFormatError, match='truncated'):
        Trainer.from_checkpoint(path)
