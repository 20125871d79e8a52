"""
FFCE Segmenter - Finite-Difference Gradient Checking
Compares analytic gradients against central differences at 64-bit precision.
"""

import logging
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from autograd.tensor import Parameter, Tensor, no_grad
from core.error_monitor import InvalidInputError

logger = logging.getLogger(__name__)

RELATIVE_FLOOR = 1e-8
REFINE_ABOVE = 1e-6
SAMPLED_FLOOR = 1e-3        # fraction of a parameter's largest gradient


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = RELATIVE_FLOOR) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def _probe_indices(grad: np.ndarray, probes: Optional[int], rng: np.random.Generator) -> np.ndarray:
    """
    Flat indices to perturb: every entry, or the largest-magnitude half of
    `probes` plus the rest drawn at random from the remaining entries, so an
    entry whose analytic gradient is wrongly zero can still be picked.
    """
    if probes is None or probes >= grad.size:
        return np.arange(grad.size)
    # stable ordering keeps the selection reproducible when magnitudes tie
    order = np.argsort(-np.abs(grad).reshape(-1), kind='stable')
    largest = (probes + 1) // 2
    drawn = rng.choice(order[largest:], size=probes - largest, replace=False)
    return np.sort(np.concatenate([order[:largest], drawn]))


def _central_difference(fn: Callable[[], Tensor], flat: np.ndarray, index: int, step: float) -> float:
    original = flat[index]
    with no_grad():
        flat[index] = original + step
        plus = fn().item()
        flat[index] = original - step
        minus = fn().item()
    flat[index] = original
    return (plus - minus) / (2.0 * step)


def grad_check(fn: Callable[[], Tensor], params: Sequence[Parameter], step: float = 1e-5,
               probes: Optional[int] = None,
               grad_transform: Optional[Callable[[str, np.ndarray], np.ndarray]] = None,
               abs_tol: float = 0.0, refine_steps: Sequence[float] = (), seed: int = 0) -> Dict[str, float]:
    """
    Check reverse-mode gradients of a scalar function against central differences.

    Args:
        fn: Zero-argument callable that rebuilds the graph and returns a scalar
            tensor; it must be deterministic (re-seed any dropout inside it)
        params: float64 parameters to check
        step: finite-difference step
        probes: check only this many entries per parameter, half with the
            largest analytic gradient and half sampled; None checks every
            entry. Checked subsets measure each error against at least
            SAMPLED_FLOOR times the parameter's largest gradient
        grad_transform: optional hook applied to each analytic gradient before
            comparison, used to verify the checker itself catches faults
        abs_tol: entries where both gradients are below this magnitude count
            as agreeing; covers gradients that are structurally zero, such as
            a bias feeding straight into train-mode batch normalization
        refine_steps: smaller steps tried, in order, for an entry whose error
            exceeds REFINE_ABOVE; the best agreement counts. A step that
            straddles a relu or max kink gives a wrong difference quotient.
        seed: seeds the entry sampling

    Returns:
        Mapping of parameter name to its maximum relative error
    """
    for param in params:
        if param.dtype != np.float64:
            raise InvalidInputError(f"grad_check needs float64 parameters, {param.name} is {param.dtype}")

    for param in params:
        param.zero_grad()
    root = fn()
    root.backward()

    rng = np.random.default_rng(seed)
    errors: Dict[str, float] = {}
    for position, param in enumerate(params):
        name = param.name or f"param{position}"
        analytic = param.grad if param.grad is not None else np.zeros_like(param.data)
        if grad_transform is not None:
            analytic = grad_transform(name, analytic)

        flat = param.data.reshape(-1)
        flat_grad = analytic.reshape(-1)
        floor = RELATIVE_FLOOR
        if probes is not None and flat_grad.size:
            floor = max(floor, SAMPLED_FLOOR * float(np.abs(flat_grad).max()))
        worst = 0.0
        for index in _probe_indices(analytic, probes, rng):
            error = 0.0
            for attempt, size in enumerate((step,) + tuple(refine_steps)):
                numeric = _central_difference(fn, flat, index, size)
                if abs(flat_grad[index]) < abs_tol and abs(numeric) < abs_tol:
                    error = 0.0
                    break
                candidate = float(relative_error(flat_grad[index], np.float64(numeric), floor))
                error = candidate if attempt == 0 else min(error, candidate)
                if error <= REFINE_ABOVE:
                    break
            worst = max(worst, error)
        errors[name] = worst
        logger.debug(f"grad_check {name}: max relative error {worst:.3e}")

    for param in params:
        param.zero_grad()
    return errors
