import numpy as np
import pydantic
import pytest

from autograd import Mode, Tensor, no_grad
from core.error_monitor import ConfigurationError, InvalidInputError, ShapeError
from network import (
    ModelParams,
    NetworkConfig,
    build_params,
    context_gamma,
    dense_block_forward,
    encoding_forward,
    ffce_forward,
    scse_forward,
)
from network.blocks import init_dense_block, init_scse
from network.encoding import init_context, init_encoding


def _scope_with(init, *args, prefix='block', dtype=np.float64):
    params = ModelParams(NetworkConfig(num_classes=3, channels=4), dtype=dtype)
    init(params.scope(prefix), *args, np.random.default_rng(0))
    return params, params.scope(prefix)


def _inputs(rng, config, n=1, extent=16):
    slices = Tensor(rng.standard_normal((n, 1, extent, extent)))
    stacks = Tensor(rng.standard_normal((n, config.stack_depth, extent, extent)))
    return slices, stacks


# configuration

def test_config_rejects_inconsistent_geometry():
    with pytest.raises(pydantic.ValidationError):
        NetworkConfig(num_classes=3, channels=6, scse_reduction=4)
    with pytest.raises(pydantic.ValidationError):
        NetworkConfig(num_classes=3, num_enc_blocks=4, num_dec_blocks=3)
    with pytest.raises(pydantic.ValidationError):
        NetworkConfig(num_classes=3, dropout_rate=1.0)


def test_config_is_frozen():
    config = NetworkConfig(num_classes=3)
    with pytest.raises(pydantic.ValidationError):
        config.channels = 8


def test_config_geometry_properties():
    config = NetworkConfig(num_classes=3, num_dec_blocks=2)
    assert config.spatial_divisor == 16
    assert config.pools_per_decoder_block == 2
    assert config.upsample_factor == 4


# parameter registry

def test_params_reject_duplicates_and_unknown_names(tiny_config):
    params = ModelParams(tiny_config)
    params.add_param('a', np.zeros(2))
    with pytest.raises(ConfigurationError):
        params.add_param('a', np.zeros(2))
    with pytest.raises(ConfigurationError):
        params['missing']


def test_build_params_is_seeded(tiny_config):
    first, second = build_params(tiny_config, seed=3), build_params(tiny_config, seed=3)
    assert first.names() == second.names()
    for (name, a), (_, b) in zip(first.named_parameters(), second.named_parameters()):
        np.testing.assert_array_equal(a.data, b.data, err_msg=name)


def test_state_arrays_roundtrip(tiny_config):
    source, target = build_params(tiny_config, seed=1), build_params(tiny_config, seed=2)
    target.load_state_arrays(source.state_arrays())
    for name, param in source.named_parameters():
        np.testing.assert_array_equal(target[name].data, param.data)


def test_load_state_arrays_rejects_other_architecture(tiny_config):
    other = NetworkConfig(num_classes=4, stack_depth=2, channels=8, codewords=4)
    with pytest.raises((ConfigurationError, ShapeError)):
        build_params(tiny_config).load_state_arrays(build_params(other).state_arrays())


# blocks

def test_dense_block_shape_and_eval_determinism(rng):
    _, scope = _scope_with(init_dense_block, 3, 4, 2)
    x = Tensor(rng.standard_normal((2, 3, 8, 8)))
    first = dense_block_forward(x, scope, Mode.EVAL)
    second = dense_block_forward(x, scope, Mode.EVAL)
    assert first.shape == (2, 4, 8, 8)
    np.testing.assert_array_equal(first.data, second.data)


def test_scse_saturated_gates_pass_input_through(rng):
    params, scope = _scope_with(init_scse, 4, 2, prefix='scse')
    for name in ('fc2.weight', 'conv.kernel'):
        scope[name].data[...] = 0.0
    scope['fc2.bias'].data[...] = 40.0
    scope['conv.bias'].data[...] = 40.0
    x = Tensor(rng.standard_normal((1, 4, 5, 5)))
    np.testing.assert_allclose(scse_forward(x, scope).data, x.data, atol=1e-12)


def test_scse_never_amplifies(rng):
    _, scope = _scope_with(init_scse, 4, 2, prefix='scse')
    x = Tensor(rng.standard_normal((2, 4, 6, 6)))
    out = scse_forward(x, scope).data
    assert np.all(np.abs(out) <= np.abs(x.data) + 1e-12)


# encoding and context

def test_encoding_single_zero_codeword_sums_descriptors(rng):
    params, scope = _scope_with(init_encoding, 4, 1, prefix='encoding')
    scope['codewords'].data[...] = 0.0
    feature = rng.standard_normal((1, 4, 3, 3))
    e = encoding_forward(Tensor(feature), scope).data
    np.testing.assert_allclose(e[0], np.maximum(feature[0].sum(axis=(1, 2)), 0.0), atol=1e-12)


def test_encoding_zero_residual(rng):
    _, scope = _scope_with(init_encoding, 4, 1, prefix='encoding')
    codeword = scope['codewords'].data[0]
    feature = np.broadcast_to(codeword[None, :, None, None], (1, 4, 3, 3)).copy()
    np.testing.assert_allclose(encoding_forward(Tensor(feature), scope).data, 0.0, atol=1e-15)


@pytest.mark.parametrize('seed', range(5))
def test_encoding_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    _, scope = _scope_with(init_encoding, 4, 6, prefix='encoding')
    feature = rng.standard_normal((1, 4, 5, 5))
    flat = feature.reshape(1, 4, 25)
    shuffled = flat[:, :, rng.permutation(25)].reshape(feature.shape)
    a = encoding_forward(Tensor(feature), scope).data
    b = encoding_forward(Tensor(shuffled), scope).data
    assert np.abs(a - b).max() < 1e-10


def test_context_gamma_examples(rng):
    _, scope = _scope_with(init_context, 4, 3, prefix='context')
    scope['fc.weight'].data[...] = 0.0
    e = Tensor(rng.standard_normal((1, 4)))
    gamma, sec_logits = context_gamma(e, scope)
    np.testing.assert_allclose(gamma.data, 0.5)
    np.testing.assert_allclose(sec_logits.data, 0.0)

    scope['fc.bias'].data[...] = 30.0
    gamma, _ = context_gamma(e, scope)
    assert np.all(np.abs(gamma.data - 1.0) < 1e-12)


def test_context_gamma_never_saturates_in_float32(rng):
    _, scope = _scope_with(init_context, 4, 3, prefix='context', dtype=np.float32)
    scope['fc.bias'].data[...] = np.array([40.0, 0.0, -40.0], dtype=np.float32)
    gamma, _ = context_gamma(Tensor(rng.standard_normal((2, 4)), dtype=np.float32), scope)
    assert np.all((gamma.data > 0.0) & (gamma.data < 1.0))


# full forward pass

def test_forward_output_shapes_unbatched(rng):
    config = NetworkConfig(num_classes=5, stack_depth=4, channels=8, codewords=4)
    params = build_params(config)
    slices, stacks = _inputs(rng, config, extent=32)
    with no_grad():
        output = ffce_forward(Tensor(slices.data[0]), Tensor(stacks.data[0]), params)
    assert output.logits.shape == (5, 32, 32)
    assert output.gamma.shape == (5,)
    assert output.sec_logits.shape == (5,)
    assert output.probs.shape == (5, 32, 32)
    np.testing.assert_allclose(output.probs.data.sum(axis=0), 1.0, atol=1e-5)


def test_forward_eval_is_deterministic(rng, tiny_config, tiny_params):
    slices, stacks = _inputs(rng, tiny_config, n=2)
    first = ffce_forward(slices, stacks, tiny_params)
    second = ffce_forward(slices, stacks, tiny_params)
    np.testing.assert_array_equal(first.probs.data, second.probs.data)


def test_bypass_gamma_returns_classifier_output(rng, tiny_config, tiny_params):
    slices, stacks = _inputs(rng, tiny_config)
    output = ffce_forward(slices, stacks, tiny_params, bypass_gamma=True)
    np.testing.assert_array_equal(output.logits.data, output.raw_logits.data)


def test_zero_gamma_silences_class(rng, tiny_config, tiny_params):
    slices, stacks = _inputs(rng, tiny_config)
    output = ffce_forward(slices, stacks, tiny_params, gamma_override=np.array([1.0, 0.0, 1.0]))
    assert np.all(output.logits.data[:, 1] == 0.0)


def test_gamma_scales_raw_logits(rng, tiny_config, tiny_params):
    slices, stacks = _inputs(rng, tiny_config)
    output = ffce_forward(slices, stacks, tiny_params)
    expected = output.raw_logits.data * output.gamma.data[:, :, None, None]
    np.testing.assert_allclose(output.logits.data, expected, rtol=1e-6)


@pytest.mark.parametrize('overrides', [
    {'input_mode': '2d'},
    {'num_dec_blocks': 2},
    {'num_dec_blocks': 1},
    {'decoder_block': 'conv'},
])
def test_variants_keep_resolution(rng, overrides):
    config = NetworkConfig(num_classes=3, stack_depth=2, channels=8, codewords=4, **overrides)
    params = build_params(config)
    slices, stacks = _inputs(rng, config, n=2)
    with no_grad():
        output = ffce_forward(slices, stacks if config.fused else None, params)
    assert output.probs.shape == (2, 3, 16, 16)


def test_two_d_mode_has_no_spatial_encoder():
    config = NetworkConfig(num_classes=3, channels=8, input_mode='2d')
    names = build_params(config).names()
    assert not any(name.startswith('encspatial.') for name in names)
    assert any(name.startswith('enc2d.') for name in names)


def test_train_mode_backward_reaches_every_block(rng, tiny_config):
    params = build_params(tiny_config)
    slices, stacks = _inputs(rng, tiny_config, n=2)
    output = ffce_forward(slices, stacks, params, mode=Mode.TRAIN, rng=rng)
    (output.logits * output.logits).sum().backward()
    for prefix in ('enc2d.block1.conv1', 'encspatial.block1.conv1', 'encoding.codewords', 'context.fc',
                   'dec.block4.conv3', 'classifier.kernel'):
        grads = [param.grad for name, param in params.named_parameters() if name.startswith(prefix)]
        assert grads and all(grad is not None for grad in grads), prefix


def test_forward_rejects_indivisible_extent(rng, tiny_config, tiny_params):
    with pytest.raises(ShapeError, match='20'):
        ffce_forward(Tensor(np.zeros((1, 1, 20, 16))), Tensor(np.zeros((1, 2, 20, 16))), tiny_params)


def test_forward_requires_stack_in_fused_mode(tiny_params):
    with pytest.raises(InvalidInputError):
        ffce_forward(Tensor(np.zeros((1, 1, 16, 16))), None, tiny_params)


def test_forward_rejects_unknown_mode(tiny_params):
    with pytest.raises(InvalidInputError, match="got 'predict'"):
        ffce_forward(Tensor(np.zeros((1, 1, 16, 16))), Tensor(np.zeros((1, 2, 16, 16))), tiny_params, mode='predict')


def test_forward_rejects_wrong_stack_depth(tiny_params):
    with pytest.raises(ShapeError):
        ffce_forward(Tensor(np.zeros((1, 1, 16, 16))), Tensor(np.zeros((1, 3, 16, 16))), tiny_params)
