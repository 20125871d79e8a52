"""
FFCE Segmenter - Verification Oracle Suite
Finite-difference gradient checks for every layer and the whole network,
closed-form loss values, encoding permutation invariance and recalibration
identities.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from autograd import (
    Mode,
    Parameter,
    Tensor,
    batchnorm2d,
    conv2d,
    grad_check,
    linear,
    maxpool2d,
    softmax_channels,
    upsample_bilinear2x,
)
from autograd.tensor import no_grad
from network.blocks import dense_block_forward, init_dense_block, init_scse, scse_forward
from network.config import NetworkConfig
from network.encoding import context_gamma, encoding_forward, init_context, init_encoding
from network.model import build_params, ffce_forward
from network.params import ModelParams
from training.losses import (
    composite_loss,
    multiclass_dice_loss,
    one_hot,
    sec_loss,
    weighted_cross_entropy,
)

logger = logging.getLogger(__name__)

LAYER_THRESHOLD = 1e-5
LINEAR_THRESHOLD = 1e-6
NETWORK_THRESHOLD = 1e-4
LOSS_VALUE_TOLERANCE = 1e-6
PERMUTATION_TOLERANCE = 1e-10
STRUCTURAL_ZERO = 1e-7
# Layer and loss checks: entries below this on both sides count as agreeing
ENTRY_ABS_TOL = 1e-4
LAYER_REFINE_STEPS = (1e-6, 1e-7)
NETWORK_REFINE_STEPS = (1e-7, 1e-8)

# Toy network used for the end-to-end gradient check
TOY_CONFIG = NetworkConfig(num_classes=3, stack_depth=2, channels=8, codewords=4)
TOY_EXTENT = 16
TOY_BATCH = 4

Forward = Callable[[], Tensor]


@dataclass
class OracleResult:
    """Outcome of one oracle on one seed"""
    name: str
    seed: Optional[int]
    value: float
    threshold: float
    passed: bool

    def to_dict(self) -> dict:
        return {'name': self.name, 'seed': self.seed, 'value': self.value,
                'threshold': self.threshold, 'passed': self.passed}


@dataclass
class OracleReport:
    """All oracle outcomes of a suite run"""
    results: List[OracleResult] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.results)

    def failures(self) -> List[OracleResult]:
        return [result for result in self.results if not result.passed]

    def worst(self) -> Dict[str, float]:
        """Largest observed value per oracle name."""
        worst: Dict[str, float] = {}
        for result in self.results:
            worst[result.name] = max(worst.get(result.name, -math.inf), result.value)
        return worst

    def to_dict(self) -> dict:
        return {
            'passed': self.passed,
            'seconds': round(self.seconds, 3),
            'checks': len(self.results),
            'failures': [result.to_dict() for result in self.failures()],
            'worst': self.worst(),
            'results': [result.to_dict() for result in self.results],
        }


# DRY Helper Methods

def _leaf(rng: np.random.Generator, shape: Tuple[int, ...], name: str, scale: float = 1.0) -> Parameter:
    return Parameter(rng.standard_normal(shape) * scale, name=name, dtype=np.float64)


def _scope_params(params: ModelParams, prefix: str) -> List[Parameter]:
    return [param for name, param in params.named_parameters() if name.startswith(prefix)]


def _upper(name: str, seed: Optional[int], value: float, threshold: float) -> OracleResult:
    """Oracle that passes when value stays below threshold."""
    return OracleResult(name, seed, float(value), threshold, bool(value < threshold))


def projection_check(forward: Forward, params: Sequence[Parameter], rng: np.random.Generator,
                     probes: Optional[int] = None, abs_tol: float = ENTRY_ABS_TOL,
                     grad_transform=None) -> float:
    """
    Gradient-check a tensor-valued function through the scalar sum(out * R)
    with a fixed random R, which exercises every output element.
    """
    with no_grad():
        shape = forward().shape
    weights = Tensor(rng.standard_normal(shape), dtype=np.float64)
    errors = grad_check(lambda: (forward() * weights).sum(), params, probes=probes,
                        abs_tol=abs_tol, grad_transform=grad_transform, refine_steps=LAYER_REFINE_STEPS)
    return max(errors.values())


def _small_params() -> ModelParams:
    return ModelParams(NetworkConfig(num_classes=3, channels=4, stack_depth=2), dtype=np.float64)


# Layer oracles

def check_conv2d(seed: int) -> OracleResult:
    rng = np.random.default_rng(seed)
    x, kernel, bias = _leaf(rng, (2, 3, 5, 5), 'x'), _leaf(rng, (4, 3, 3, 3), 'kernel'), _leaf(rng, (4,), 'bias')
    return _upper('grad.conv2d', seed, projection_check(lambda: conv2d(x, kernel, bias), [x, kernel, bias], rng),
                  LINEAR_THRESHOLD)


def check_maxpool2d(seed: int) -> OracleResult:
    rng = np.random.default_rng(seed)
    x = _leaf(rng, (2, 2, 6, 6), 'x')
    return _upper('grad.maxpool2d', seed, projection_check(lambda: maxpool2d(x)[0], [x], rng), LAYER_THRESHOLD)


def check_upsample(seed: int) -> OracleResult:
    rng = np.random.default_rng(seed)
    x = _leaf(rng, (1, 2, 3, 3), 'x')
    return _upper('grad.upsample_bilinear2x', seed, projection_check(lambda: upsample_bilinear2x(x), [x], rng),
                  LINEAR_THRESHOLD)


def check_batchnorm(seed: int) -> OracleResult:
    rng = np.random.default_rng(seed)
    x = _leaf(rng, (3, 2, 3, 3), 'x')
    scale, shift = _leaf(rng, (2,), 'scale'), _leaf(rng, (2,), 'shift')
    running_mean, running_var = np.zeros(2), np.ones(2)

    def forward() -> Tensor:
        return batchnorm2d(x, scale, shift, running_mean, running_var, Mode.TRAIN)

    return _upper('grad.batchnorm2d', seed, projection_check(forward, [x, scale, shift], rng), LAYER_THRESHOLD)


def check_linear(seed: int) -> OracleResult:
    rng = np.random.default_rng(seed)
    x, weight, bias = _leaf(rng, (3, 5), 'x'), _leaf(rng, (4, 5), 'weight'), _leaf(rng, (4,), 'bias')
    return _upper('grad.linear', seed, projection_check(lambda: linear(x, weight, bias), [x, weight, bias], rng),
                  LINEAR_THRESHOLD)


def check_scse(seed: int) -> OracleResult:
    rng = np.random.default_rng(seed)
    params = _small_params()
    init_scse(params.scope('scse'), 4, 2, rng)
    x = _leaf(rng, (2, 4, 4, 4), 'x')
    forward = lambda: scse_forward(x, params.scope('scse'))
    return _upper('grad.scse', seed, projection_check(forward, [x] + params.parameters(), rng, probes=12),
                  LAYER_THRESHOLD)


def check_dense_block(seed: int) -> OracleResult:
    rng = np.random.default_rng(seed)
    params = _small_params()
    init_dense_block(params.scope('block'), 3, 4, 2, rng)
    x = _leaf(rng, (2, 3, 4, 4), 'x')
    forward = lambda: dense_block_forward(x, params.scope('block'), Mode.TRAIN)
    value = projection_check(forward, [x] + params.parameters(), rng, probes=6)
    return _upper('grad.dense_block', seed, value, LAYER_THRESHOLD)


def check_encoding(seed: int) -> OracleResult:
    rng = np.random.default_rng(seed)
    params = _small_params()
    init_encoding(params.scope('encoding'), 4, 3, rng)
    x = _leaf(rng, (2, 4, 3, 3), 'x', scale=0.5)
    forward = lambda: encoding_forward(x, params.scope('encoding'))
    return _upper('grad.encoding', seed, projection_check(forward, [x] + params.parameters(), rng),
                  LAYER_THRESHOLD)


def check_context_gamma(seed: int) -> OracleResult:
    rng = np.random.default_rng(seed)
    params = _small_params()
    init_context(params.scope('context'), 4, 3, rng)
    e = _leaf(rng, (2, 4), 'e')
    forward = lambda: context_gamma(e, params.scope('context'))[0]
    return _upper('grad.context_gamma', seed, projection_check(forward, [e] + params.parameters(), rng),
                  LINEAR_THRESHOLD)


def check_losses(seed: int) -> List[OracleResult]:
    rng = np.random.default_rng(seed)
    logits = _leaf(rng, (2, 3, 4, 4), 'logits')
    gt = rng.integers(0, 3, size=(2, 4, 4))
    omega = rng.uniform(0.5, 2.0, size=3)
    sec_logits = _leaf(rng, (2, 3), 'sec_logits')
    presence = rng.integers(0, 2, size=(2, 3))

    ce = grad_check(lambda: weighted_cross_entropy(softmax_channels(logits), gt, omega), [logits],
                    abs_tol=ENTRY_ABS_TOL)
    dice = grad_check(lambda: multiclass_dice_loss(softmax_channels(logits), one_hot(gt, 3, np.float64)), [logits],
                      abs_tol=ENTRY_ABS_TOL)
    sec = grad_check(lambda: sec_loss(sec_logits, presence), [sec_logits], abs_tol=ENTRY_ABS_TOL)
    return [
        _upper('grad.cross_entropy', seed, max(ce.values()), LAYER_THRESHOLD),
        _upper('grad.dice_loss', seed, max(dice.values()), LAYER_THRESHOLD),
        _upper('grad.sec_loss', seed, max(sec.values()), LAYER_THRESHOLD),
    ]


def check_full_network(seed: int, params_per_seed: Optional[int] = 24) -> OracleResult:
    """
    Composite loss through the whole toy network in train mode, dropout
    included with a mask stream re-seeded on every evaluation.
    """
    rng = np.random.default_rng(seed)
    params = build_params(TOY_CONFIG, seed=seed, dtype=np.float64)
    shape = (TOY_BATCH, 1, TOY_EXTENT, TOY_EXTENT)
    slices = Tensor(rng.standard_normal(shape), dtype=np.float64)
    stacks = Tensor(rng.standard_normal((TOY_BATCH, TOY_CONFIG.stack_depth, TOY_EXTENT, TOY_EXTENT)),
                    dtype=np.float64)
    gt = rng.integers(0, TOY_CONFIG.num_classes, size=(TOY_BATCH, TOY_EXTENT, TOY_EXTENT))
    presence = (one_hot(gt, TOY_CONFIG.num_classes, np.float64).sum(axis=(2, 3)) > 0).astype(np.float64)

    def loss() -> Tensor:
        dropout_rng = np.random.default_rng(seed + 10_000)
        output = ffce_forward(slices, stacks, params, mode=Mode.TRAIN, rng=dropout_rng)
        return composite_loss(output, gt, presence).total

    checked = params.parameters()
    if params_per_seed is not None and params_per_seed < len(checked):
        picks = np.sort(rng.choice(len(checked), size=params_per_seed, replace=False))
        checked = [checked[index] for index in picks]
    errors = grad_check(loss, checked, step=1e-6, probes=2, abs_tol=STRUCTURAL_ZERO,
                        refine_steps=NETWORK_REFINE_STEPS, seed=seed)
    return _upper('grad.full_network', seed, max(errors.values()), NETWORK_THRESHOLD)


# Value oracles

def check_loss_values() -> List[OracleResult]:
    """Closed-form values of the three losses."""
    ce = weighted_cross_entropy(Tensor(np.full((2, 1, 1), 0.5), dtype=np.float64), np.zeros((1, 1), dtype=int),
                                np.ones(2)).item()
    probs = Tensor(np.full((2, 1, 1), 0.5), dtype=np.float64)
    dice = multiclass_dice_loss(probs, np.array([[[1.0]], [[0.0]]])).item()
    sec = sec_loss(Tensor(np.zeros(4), dtype=np.float64), np.array([1, 0, 1, 0])).item()
    return [
        _upper('value.cross_entropy_ln2', None, abs(ce - math.log(2)), LOSS_VALUE_TOLERANCE),
        _upper('value.dice_single_pixel', None, abs(dice - (-0.4)), LOSS_VALUE_TOLERANCE),
        _upper('value.sec_ln2', None, abs(sec - math.log(2)), LOSS_VALUE_TOLERANCE),
    ]


def check_encoding_invariance(seed: int) -> OracleResult:
    """Permuting spatial positions must not change the encoding."""
    rng = np.random.default_rng(seed)
    params = _small_params()
    init_encoding(params.scope('encoding'), 4, 5, rng)
    feature = rng.standard_normal((1, 4, 4, 5))
    flat = feature.reshape(1, 4, -1)
    permuted = flat[:, :, rng.permutation(flat.shape[2])].reshape(feature.shape)
    with no_grad():
        original = encoding_forward(Tensor(feature, dtype=np.float64), params.scope('encoding')).data
        shuffled = encoding_forward(Tensor(permuted, dtype=np.float64), params.scope('encoding')).data
    return _upper('invariance.encoding_permutation', seed, float(np.abs(original - shuffled).max()),
                  PERMUTATION_TOLERANCE)


def check_recalibration(seed: int) -> List[OracleResult]:
    """gamma = 1 leaves the logits untouched; gamma_l = 0 zeroes channel l."""
    rng = np.random.default_rng(seed)
    params = build_params(TOY_CONFIG, seed=seed, dtype=np.float64)
    slices = Tensor(rng.standard_normal((1, 1, TOY_EXTENT, TOY_EXTENT)), dtype=np.float64)
    stacks = Tensor(rng.standard_normal((1, TOY_CONFIG.stack_depth, TOY_EXTENT, TOY_EXTENT)), dtype=np.float64)
    target = int(rng.integers(0, TOY_CONFIG.num_classes))
    gate = np.ones(TOY_CONFIG.num_classes)
    gate[target] = 0.0
    with no_grad():
        bypass = ffce_forward(slices, stacks, params, bypass_gamma=True)
        gated = ffce_forward(slices, stacks, params, gamma_override=gate)
    identity_mismatch = 0.0 if np.array_equal(bypass.logits.data, bypass.raw_logits.data) else 1.0
    zeroed = float(np.abs(gated.logits.data[:, target]).max())
    return [
        _upper('identity.gamma_one', seed, identity_mismatch, 0.5),
        _upper('identity.gamma_zero', seed, zeroed, 1e-300),
    ]


def check_sensitivity(seed: int) -> OracleResult:
    """A gradient corrupted by 1% must be reported with error above 1e-3."""
    rng = np.random.default_rng(seed)
    x, weight, bias = _leaf(rng, (3, 5), 'x'), _leaf(rng, (4, 5), 'weight'), _leaf(rng, (4,), 'bias')
    value = projection_check(lambda: linear(x, weight, bias), [x, weight, bias], rng,
                             grad_transform=lambda name, grad: grad * 1.01)
    return OracleResult('sensitivity.corrupted_gradient', seed, value, 1e-3, bool(value > 1e-3))


LAYER_ORACLES: Tuple[Callable[[int], OracleResult], ...] = (
    check_conv2d, check_maxpool2d, check_upsample, check_batchnorm, check_linear,
    check_scse, check_dense_block, check_encoding, check_context_gamma,
)


def run_oracle_suite(seeds: int = 20, network_params_per_seed: Optional[int] = 24,
                     include_network: bool = True) -> OracleReport:
    """
    Run every oracle across `seeds` random seeds.

    Args:
        seeds: Number of seeds (0..seeds-1) for the randomized oracles
        network_params_per_seed: Parameters sampled per seed in the full-network
            check; None checks all of them
        include_network: Include the end-to-end network gradient check

    Returns:
        OracleReport of every check
    """
    start_time = time.perf_counter()
    report = OracleReport()
    report.results.extend(check_loss_values())
    for seed in range(seeds):
        report.results.extend(oracle(seed) for oracle in LAYER_ORACLES)
        report.results.extend(check_losses(seed))
        report.results.append(check_encoding_invariance(seed))
        report.results.extend(check_recalibration(seed))
        report.results.append(check_sensitivity(seed))
        if include_network:
            report.results.append(check_full_network(seed, network_params_per_seed))
        logger.debug(f"Oracle seed {seed} done")
    report.seconds = time.perf_counter() - start_time

    for failure in report.failures():
        logger.error(f"Oracle failed: {failure.name} seed {failure.seed} value {failure.value:.3e} "
                     f"(threshold {failure.threshold:.1e})")
    logger.info(f"Oracle suite: {len(report.results)} checks, {len(report.failures())} failures, "
                f"{report.seconds:.1f}s")
    return report
