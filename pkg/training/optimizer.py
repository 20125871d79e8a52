"""
FFCE Segmenter - Optimizer
Poly learning-rate schedule and SGD with momentum and weight decay.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable

import numpy as np

from autograd import Parameter
from core.error_monitor import InvalidInputError, ShapeError

logger = logging.getLogger(__name__)


def poly_lr(base_lr: float, iteration: int, iter_total: int, power: float) -> float:
    """base_lr * (1 - iteration / iter_total) ** power"""
    if iter_total <= 0:
        raise InvalidInputError(f"iter_total must be positive, got {iter_total}")
    if not 0 <= iteration <= iter_total:
        raise InvalidInputError(f"iteration {iteration} outside [0, {iter_total}]")
    return base_lr * (1.0 - iteration / iter_total) ** power


@dataclass
class OptimizerState:
    """Momentum buffers keyed by parameter name and the global iteration counter."""
    momentum: Dict[str, np.ndarray] = field(default_factory=dict)
    iteration: int = 0

    @classmethod
    def zeros_like(cls, params: Iterable[Parameter]) -> 'OptimizerState':
        return cls(momentum={param.name: np.zeros_like(param.data) for param in params})

    def to_dict(self) -> dict:
        return {'iteration': self.iteration, 'buffers': len(self.momentum)}


def sgd_step(params: Iterable[Parameter], state: OptimizerState, lr: float,
             momentum: float, weight_decay: float) -> None:
    """
    One update per parameter:
        g' = g + weight_decay * w
        buf = momentum * buf + g'
        w = w - lr * buf

    Parameters without a gradient are treated as having a zero gradient.
    Values are replaced by new arrays, never modified in place.
    """
    for param in params:
        grad = param.grad if param.grad is not None else np.zeros_like(param.data)
        if grad.shape != param.shape:
            raise ShapeError(f"{param.name}: gradient {grad.shape} does not match parameter {param.shape}")
        buffer = state.momentum.get(param.name)
        if buffer is None:
            buffer = np.zeros_like(param.data)
        elif buffer.shape != param.shape:
            raise ShapeError(f"{param.name}: momentum buffer {buffer.shape} does not match parameter {param.shape}")

        dtype = param.data.dtype.type
        update = grad + dtype(weight_decay) * param.data
        buffer = dtype(momentum) * buffer + update
        state.momentum[param.name] = buffer
        param.data = param.data - dtype(lr) * buffer
    state.iteration += 1
