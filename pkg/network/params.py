"""
FFCE Segmenter - Model Parameters
Named parameter and buffer registry with path-like scoping.
"""

import logging
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from autograd import DEFAULT_DTYPE, Parameter
from core.error_monitor import ConfigurationError, ShapeError
from network.config import NetworkConfig

logger = logging.getLogger(__name__)


class ModelParams:
    """
    Every learnable weight of a network plus its non-learnable buffers
    (batch-norm running statistics), keyed by unique dotted names.

    Insertion order is the canonical order used for optimizer state and
    checkpoint blobs.
    """

    def __init__(self, config: NetworkConfig, dtype: np.dtype = DEFAULT_DTYPE):
        self.config = config
        self.dtype = np.dtype(dtype)
        self._params: Dict[str, Parameter] = {}
        self._buffers: Dict[str, np.ndarray] = {}

    def add_param(self, name: str, value: np.ndarray) -> Parameter:
        if name in self._params or name in self._buffers:
            raise ConfigurationError(f"duplicate parameter name {name!r}")
        param = Parameter(value, name=name, dtype=self.dtype)
        self._params[name] = param
        return param

    def add_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._params or name in self._buffers:
            raise ConfigurationError(f"duplicate buffer name {name!r}")
        buffer = np.array(value, dtype=self.dtype)
        self._buffers[name] = buffer
        return buffer

    def __getitem__(self, name: str) -> Parameter:
        try:
            return self._params[name]
        except KeyError:
            raise ConfigurationError(f"no parameter named {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params or name in self._buffers

    def __len__(self) -> int:
        return len(self._params)

    def buffer(self, name: str) -> np.ndarray:
        try:
            return self._buffers[name]
        except KeyError:
            raise ConfigurationError(f"no buffer named {name!r}") from None

    def parameters(self) -> List[Parameter]:
        return list(self._params.values())

    def named_parameters(self) -> Iterator[Tuple[str, Parameter]]:
        return iter(self._params.items())

    def names(self) -> List[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for param in self._params.values():
            param.zero_grad()

    def num_elements(self) -> int:
        return sum(param.size for param in self._params.values())

    def scope(self, prefix: str) -> 'ParamScope':
        return ParamScope(self, prefix)

    def astype(self, dtype: np.dtype) -> 'ModelParams':
        """Independent copy with every value cast to `dtype`."""
        copy = ModelParams(self.config, dtype)
        for name, param in self._params.items():
            copy.add_param(name, param.data)
        for name, buffer in self._buffers.items():
            copy.add_buffer(name, buffer)
        return copy

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """Copies of all values, parameters under 'param/' and buffers under 'buffer/'."""
        state = {f"param/{name}": param.data.copy() for name, param in self._params.items()}
        state.update({f"buffer/{name}": buffer.copy() for name, buffer in self._buffers.items()})
        return state

    def load_state_arrays(self, state: Dict[str, np.ndarray]) -> None:
        """
        Replace values from `state_arrays()` output.

        The stored name set and every shape must match this model exactly.
        """
        expected = set(self.state_arrays())
        provided = {key for key in state if key.startswith(('param/', 'buffer/'))}
        if expected != provided:
            missing = sorted(expected - provided)[:3]
            extra = sorted(provided - expected)[:3]
            raise ConfigurationError(f"parameter set mismatch (missing {missing}, unexpected {extra})")
        for name, param in self._params.items():
            value = state[f"param/{name}"]
            if value.shape != param.shape:
                raise ShapeError(f"{name}: stored shape {value.shape} != model shape {param.shape}")
            param.data = np.array(value, dtype=self.dtype)
        for name, buffer in self._buffers.items():
            value = state[f"buffer/{name}"]
            if value.shape != buffer.shape:
                raise ShapeError(f"{name}: stored shape {value.shape} != model shape {buffer.shape}")
            buffer[...] = value


class ParamScope:
    """View of a ModelParams under a dotted name prefix."""

    def __init__(self, params: ModelParams, prefix: str):
        self.params = params
        self.prefix = prefix

    def _full(self, name: str) -> str:
        return f"{self.prefix}.{name}" if self.prefix else name

    def child(self, name: str) -> 'ParamScope':
        return ParamScope(self.params, self._full(name))

    def __getitem__(self, name: str) -> Parameter:
        return self.params[self._full(name)]

    def get(self, name: str) -> Optional[Parameter]:
        full = self._full(name)
        return self.params[full] if full in self.params else None

    def buffer(self, name: str) -> np.ndarray:
        return self.params.buffer(self._full(name))

    def add_param(self, name: str, value: np.ndarray) -> Parameter:
        return self.params.add_param(self._full(name), value)

    def add_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        return self.params.add_buffer(self._full(name), value)

    def __repr__(self) -> str:
        return f"ParamScope({self.prefix!r})"
