"""
FFCE Segmenter - Tensor Autograd Engine
Dense numpy-backed tensors with reverse-mode differentiation.
"""

import logging
import threading
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.error_monitor import ShapeError

logger = logging.getLogger(__name__)

# Training and inference run at 32-bit; gradient checks pass float64 arrays explicitly
DEFAULT_DTYPE = np.float32

_grad_state = threading.local()

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]


def is_grad_enabled() -> bool:
    """Whether operations in the current thread record a computation graph."""
    return getattr(_grad_state, 'enabled', True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording in the current thread."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


def _as_float_array(data: ArrayLike, dtype: Optional[np.dtype] = None) -> np.ndarray:
    array = np.asarray(data)
    if dtype is not None:
        return np.asarray(array, dtype=dtype, order='C')
    if array.dtype.kind != 'f':
        return np.asarray(array, dtype=DEFAULT_DTYPE, order='C')
    return np.asarray(array, order='C')


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement `forward` on raw arrays and `backward`, which maps the
    gradient of the output to one gradient (or None) per tensor input.
    """

    def __init__(self, *inputs: 'Tensor'):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *inputs: 'Tensor', **kwargs: Any) -> 'Tensor':
        """
        Run the forward pass and link the result into the graph.

        Args:
            *inputs: Tensor operands
            **kwargs: Non-tensor arguments forwarded to `forward`

        Returns:
            Output tensor; it records this function only when some input needs
            a gradient and graph recording is enabled
        """
        func = cls(*inputs)
        out_data = func.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        out = Tensor(out_data, requires_grad=requires_grad)
        if requires_grad:
            out._creator = func
        return out


class Tensor:
    """
    n-dimensional array with an optional gradient buffer and a link to the
    operation that produced it.
    """

    def __init__(self, data: ArrayLike, requires_grad: bool = False,
                 dtype: Optional[np.dtype] = None, name: Optional[str] = None):
        self.data = _as_float_array(data, dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._creator: Optional[Function] = None

    # -- array facts -------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._creator is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"

    # -- arithmetic sugar --------------------------------------------------

    def __add__(self, other):
        from autograd import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from autograd import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from autograd import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from autograd import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from autograd import ops
        return ops.div(self, other)

    def __neg__(self):
        from autograd import ops
        return ops.neg(self)

    def sum(self, axes=None, keepdims: bool = False) -> 'Tensor':
        from autograd import ops
        return ops.reduce('sum', self, axes, keepdims)

    def mean(self, axes=None, keepdims: bool = False) -> 'Tensor':
        from autograd import ops
        return ops.reduce('mean', self, axes, keepdims)

    def reshape(self, *shape) -> 'Tensor':
        from autograd import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    # -- reverse mode ------------------------------------------------------

    def _accumulate(self, grad: np.ndarray) -> None:
        grad = np.array(grad, dtype=self.data.dtype).reshape(self.data.shape)
        if self.grad is None:
            self.grad = grad
        else:
            self.grad = self.grad + grad

    def _topological_order(self) -> List['Tensor']:
        """Graph nodes reachable from this tensor, inputs before outputs."""
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._creator is not None:
                for parent in node._creator.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return order

    def backward(self) -> None:
        """
        Accumulate d(self)/d(leaf) into every reachable leaf that requires a
        gradient. Gradients from shared subexpressions add up.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar root, got shape {self.shape}")
        if not self.requires_grad:
            return

        grads: Dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(self._topological_order()):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node._creator is None:
                node._accumulate(grad)
                continue
            input_grads = node._creator.backward(grad)
            for parent, parent_grad in zip(node._creator.inputs, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad


class Parameter(Tensor):
    """A learnable leaf tensor with a unique path-like name."""

    def __init__(self, data: ArrayLike, name: str, dtype: Optional[np.dtype] = None):
        super().__init__(data, requires_grad=True, dtype=dtype, name=name)

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape}, dtype={self.dtype})"
