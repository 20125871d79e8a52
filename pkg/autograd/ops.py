"""
FFCE Segmenter - Differentiable Operators
Forward operators and their analytic backward passes: convolution, pooling,
bilinear upsampling, batch normalization, affine maps, pointwise functions,
softmax, concatenation, reductions and dropout.
"""

import logging
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from autograd.tensor import Function, Tensor
from core.error_monitor import InvalidInputError, ShapeError

logger = logging.getLogger(__name__)

Axes = Optional[Union[int, Sequence[int]]]

LOG_CLAMP = 1e-12
BN_EPSILON = 1e-5
BN_MOMENTUM = 0.1


class Mode(str, Enum):
    """Layer behaviour for batch-norm and dropout"""
    TRAIN = "train"
    EVAL = "eval"


# DRY Helper Methods

def as_mode(mode: Union[str, Mode]) -> Mode:
    try:
        return Mode(mode)
    except ValueError:
        raise InvalidInputError(f"mode must be 'train' or 'eval', got {mode!r}") from None


def _lift(value, like: Tensor) -> Tensor:
    """Wrap a constant so it can meet `like` in a binary operation."""
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def _binary_operands(a, b) -> Tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise InvalidInputError("at least one operand must be a Tensor")
    like = a if isinstance(a, Tensor) else b
    return _lift(a, like), _lift(b, like)


def _check_broadcast(kind: str, a_shape: Tuple[int, ...], b_shape: Tuple[int, ...]) -> None:
    """Operands must agree dimension by dimension, up to singleton extents."""
    if a_shape == b_shape or a_shape == () or b_shape == ():
        return
    if len(a_shape) != len(b_shape):
        raise ShapeError(f"{kind}: cannot broadcast {a_shape} against {b_shape} (rank differs)")
    for left, right in zip(a_shape, b_shape):
        if left != right and left != 1 and right != 1:
            raise ShapeError(f"{kind}: cannot broadcast {a_shape} against {b_shape}")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape of a broadcast operand."""
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum(), dtype=grad.dtype)
    axes = tuple(dim for dim, extent in enumerate(shape) if extent == 1 and grad.shape[dim] != 1)
    return grad.sum(axis=axes, keepdims=True)


def _normalize_axes(axes: Axes, ndim: int) -> Tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    return tuple(sorted(axis % ndim for axis in axes))


def _channel_axis(t: Tensor) -> int:
    """Channel axis of a batched (N,C,H,W) or single (C,H,W) map."""
    return 1 if t.ndim == 4 else 0


# Pointwise arithmetic

class Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return (_unbroadcast(grad * self.b, self.a.shape),
                _unbroadcast(grad * self.a, self.b.shape))


class Div(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        grad_a = grad / self.b
        grad_b = -grad * self.a / (self.b * self.b)
        return _unbroadcast(grad_a, self.a.shape), _unbroadcast(grad_b, self.b.shape)


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, grad):
        return (-grad,)


class Maximum(Function):
    """Elementwise maximum; ties send the gradient to the first operand."""

    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        self.first_wins = a >= b
        return np.maximum(a, b)

    def backward(self, grad):
        grad_a = np.where(self.first_wins, grad, 0).astype(grad.dtype)
        grad_b = np.where(self.first_wins, 0, grad).astype(grad.dtype)
        return _unbroadcast(grad_a, self.shapes[0]), _unbroadcast(grad_b, self.shapes[1])


class ReLU(Function):
    def forward(self, x):
        self.positive = x > 0
        return np.where(self.positive, x, 0).astype(x.dtype)

    def backward(self, grad):
        return (np.where(self.positive, grad, 0).astype(grad.dtype),)


class Sigmoid(Function):
    def forward(self, x):
        # tanh form stays finite for any input and gives exactly 0.5 at 0;
        # the clip keeps saturated outputs strictly inside (0, 1)
        bound = float(np.finfo(x.dtype).epsneg)
        self.out = np.clip(0.5 * (1.0 + np.tanh(0.5 * x)), bound, 1.0 - bound)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Exp(Function):
    def forward(self, x):
        self.out = np.exp(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    """Natural log with the argument clamped from below."""

    def forward(self, x, clamp=LOG_CLAMP):
        self.clamped = np.maximum(x, clamp)
        self.active = x > clamp
        return np.log(self.clamped)

    def backward(self, grad):
        return (np.where(self.active, grad / self.clamped, 0).astype(grad.dtype),)


class Softplus(Function):
    """log(1 + exp(x)) in its overflow-free form."""

    def forward(self, x):
        self.x = x
        return np.logaddexp(0, x)

    def backward(self, grad):
        return (grad * 0.5 * (1.0 + np.tanh(0.5 * self.x)),)


# Shape plumbing

class Reshape(Function):
    def forward(self, x, shape):
        self.in_shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


class Concat(Function):
    def forward(self, *arrays, axis=1):
        self.axis = axis
        self.bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        return tuple(np.split(grad, self.bounds, axis=self.axis))


class SliceAxis(Function):
    def forward(self, x, axis, start, stop):
        self.in_shape, self.axis, self.start, self.stop = x.shape, axis, start, stop
        index = [slice(None)] * x.ndim
        index[axis] = slice(start, stop)
        self.index = tuple(index)
        return x[self.index].copy()

    def backward(self, grad):
        full = np.zeros(self.in_shape, dtype=grad.dtype)
        full[self.index] = grad
        return (full,)


# Reductions

class Sum(Function):
    def forward(self, x, axes=None, keepdims=False):
        self.in_shape = x.shape
        self.axes = _normalize_axes(axes, x.ndim)
        self.keepdims = keepdims
        return np.asarray(x.sum(axis=self.axes, keepdims=keepdims))

    def backward(self, grad):
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return (np.broadcast_to(grad, self.in_shape),)


class Mean(Function):
    def forward(self, x, axes=None, keepdims=False):
        self.in_shape = x.shape
        self.axes = _normalize_axes(axes, x.ndim)
        self.keepdims = keepdims
        self.count = int(np.prod([x.shape[axis] for axis in self.axes]))
        return np.asarray(x.mean(axis=self.axes, keepdims=keepdims))

    def backward(self, grad):
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return (np.broadcast_to(grad / self.count, self.in_shape),)


class Softmax(Function):
    def forward(self, x, axis=1):
        self.axis = axis
        shifted = x - x.max(axis=axis, keepdims=True)
        exp = np.exp(shifted)
        self.out = exp / exp.sum(axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        inner = (grad * self.out).sum(axis=self.axis, keepdims=True)
        return (self.out * (grad - inner),)


# Layers

class Conv2d(Function):
    """Cross-correlation via an im2col matrix product."""

    def forward(self, x, kernel, bias=None, stride=1, padding=0):
        n, c_in, _, _ = x.shape
        c_out, _, kh, kw = kernel.shape
        self.stride, self.padding = stride, padding
        self.x_shape = x.shape
        self.kernel = kernel

        if padding:
            x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        self.padded_shape = x.shape

        windows = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        h_out, w_out = windows.shape[2], windows.shape[3]
        self.out_hw = (h_out, w_out)
        self.cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h_out * w_out, c_in * kh * kw)

        out = self.cols @ kernel.reshape(c_out, -1).T
        if bias is not None:
            out = out + bias
        return np.ascontiguousarray(out.reshape(n, h_out, w_out, c_out).transpose(0, 3, 1, 2))

    def backward(self, grad):
        n, c_out, h_out, w_out = grad.shape
        _, c_in, kh, kw = self.kernel.shape
        s, p = self.stride, self.padding

        grad_rows = grad.transpose(0, 2, 3, 1).reshape(-1, c_out)
        grad_kernel = (grad_rows.T @ self.cols).reshape(self.kernel.shape)
        grad_bias = grad_rows.sum(axis=0)

        grad_cols = (grad_rows @ self.kernel.reshape(c_out, -1)).reshape(n, h_out, w_out, c_in, kh, kw)
        grad_padded = np.zeros(self.padded_shape, dtype=grad.dtype)
        for i in range(kh):
            for j in range(kw):
                grad_padded[:, :, i:i + s * h_out:s, j:j + s * w_out:s] += \
                    grad_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        h, w = self.x_shape[2], self.x_shape[3]
        grad_x = grad_padded[:, :, p:p + h, p:p + w] if p else grad_padded

        if len(self.inputs) == 3:
            return grad_x, grad_kernel, grad_bias
        return grad_x, grad_kernel


class MaxPool2d(Function):
    """Non-overlapping max pooling; ties resolve to the first row-major position."""

    def forward(self, x, window=2):
        n, c, h, w = x.shape
        self.x_shape, self.window = x.shape, window
        blocks = x.reshape(n, c, h // window, window, w // window, window)
        blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // window, w // window, window * window)
        self.argmax = blocks.argmax(axis=-1)
        return np.take_along_axis(blocks, self.argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        n, c, h, w = self.x_shape
        k = self.window
        hits = np.arange(k * k) == self.argmax[..., None]
        spread = np.where(hits, grad[..., None], 0).astype(grad.dtype)
        spread = spread.reshape(n, c, h // k, w // k, k, k).transpose(0, 1, 2, 4, 3, 5)
        return (spread.reshape(n, c, h, w),)


def _bilinear_matrix(size: int, factor: int, dtype: np.dtype) -> np.ndarray:
    """Interpolation weights (size*factor x size), half-pixel centres, edge clamped."""
    out_size = size * factor
    source = np.maximum((np.arange(out_size) + 0.5) / factor - 0.5, 0.0)
    low = np.minimum(np.floor(source).astype(np.int64), size - 1)
    high = np.minimum(low + 1, size - 1)
    frac = source - low
    matrix = np.zeros((out_size, size), dtype=np.float64)
    rows = np.arange(out_size)
    np.add.at(matrix, (rows, low), 1.0 - frac)
    np.add.at(matrix, (rows, high), frac)
    return matrix.astype(dtype)


class UpsampleBilinear(Function):
    """Separable bilinear resize: out = A_h @ x @ A_w^T per map."""

    def forward(self, x, factor=2):
        _, _, h, w = x.shape
        self.rows = _bilinear_matrix(h, factor, x.dtype)
        self.cols = _bilinear_matrix(w, factor, x.dtype)
        return (self.rows @ x) @ self.cols.T

    def backward(self, grad):
        return (self.rows.T @ (grad @ self.cols),)


class BatchNorm2d(Function):
    def forward(self, x, scale, shift, running_mean=None, running_var=None,
                training=True, momentum=BN_MOMENTUM, eps=BN_EPSILON):
        axes = (0, 2, 3)
        self.training = training
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            count = x.size // x.shape[1]
            self.count = count
            # Running statistics are updated in place; they never feed back into train-mode output
            running_mean *= (1.0 - momentum)
            running_mean += momentum * mean
            unbiased = var * count / (count - 1) if count > 1 else var
            running_var *= (1.0 - momentum)
            running_var += momentum * unbiased
        else:
            mean = running_mean.astype(x.dtype)
            var = running_var.astype(x.dtype)

        self.invstd = (1.0 / np.sqrt(var + eps)).astype(x.dtype)[None, :, None, None]
        self.xhat = (x - mean.astype(x.dtype)[None, :, None, None]) * self.invstd
        self.scale = scale[None, :, None, None]
        return self.scale * self.xhat + shift[None, :, None, None]

    def backward(self, grad):
        axes = (0, 2, 3)
        grad_scale = (grad * self.xhat).sum(axis=axes)
        grad_shift = grad.sum(axis=axes)
        grad_xhat = grad * self.scale
        if self.training:
            m = self.count
            grad_x = (self.invstd / m) * (
                m * grad_xhat
                - grad_xhat.sum(axis=axes, keepdims=True)
                - self.xhat * (grad_xhat * self.xhat).sum(axis=axes, keepdims=True)
            )
        else:
            grad_x = grad_xhat * self.invstd
        return grad_x, grad_scale, grad_shift


class Linear(Function):
    def forward(self, x, weight, bias=None):
        self.x, self.weight = x, weight
        out = x @ weight.T
        if bias is not None:
            out = out + bias
        return out

    def backward(self, grad):
        grad_x = grad @ self.weight
        grad_weight = grad.T @ self.x
        if len(self.inputs) == 3:
            return grad_x, grad_weight, grad.sum(axis=0)
        return grad_x, grad_weight


# Public operator surface

def add(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    _check_broadcast('add', a.shape, b.shape)
    return Add.apply(a, b)


def sub(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    _check_broadcast('sub', a.shape, b.shape)
    return Sub.apply(a, b)


def mul(a, b) -> Tensor:
    """Elementwise product; a (N,C,1,1) gate against (N,C,H,W) is the channel-wise product."""
    a, b = _binary_operands(a, b)
    _check_broadcast('mul', a.shape, b.shape)
    return Mul.apply(a, b)


def div(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    _check_broadcast('div', a.shape, b.shape)
    return Div.apply(a, b)


def neg(x: Tensor) -> Tensor:
    return Neg.apply(x)


def maximum(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    _check_broadcast('maximum', a.shape, b.shape)
    return Maximum.apply(a, b)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def exp(x: Tensor) -> Tensor:
    return Exp.apply(x)


def log(x: Tensor, clamp: float = LOG_CLAMP) -> Tensor:
    return Log.apply(x, clamp=clamp)


def softplus(x: Tensor) -> Tensor:
    return Softplus.apply(x)


_UNARY = {'relu': relu, 'sigmoid': sigmoid, 'exp': exp, 'softplus': softplus}
_BINARY = {'add': add, 'mul': mul, 'sub': sub, 'maximum': maximum}


def pointwise(kind: str, *operands) -> Tensor:
    """
    Apply an elementwise operation by name.

    Args:
        kind: relu | sigmoid | exp | softplus (one operand) or add | mul | sub | maximum (two)
        *operands: Tensors (binary kinds also accept one plain number)

    Returns:
        Result tensor
    """
    if kind in _UNARY:
        if len(operands) != 1:
            raise InvalidInputError(f"{kind} takes one operand, got {len(operands)}")
        return _UNARY[kind](operands[0])
    if kind in _BINARY:
        if len(operands) != 2:
            raise InvalidInputError(f"{kind} takes two operands, got {len(operands)}")
        return _BINARY[kind](*operands)
    raise InvalidInputError(f"unknown pointwise kind {kind!r}")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    first = tensors[0]
    for other in tensors[1:]:
        if other.ndim != first.ndim:
            raise ShapeError(f"concat: rank mismatch {first.shape} vs {other.shape}")
        for dim in range(first.ndim):
            if dim != axis % first.ndim and other.shape[dim] != first.shape[dim]:
                raise ShapeError(f"concat: extents differ outside axis {axis}: {first.shape} vs {other.shape}")
    return Concat.apply(*tensors, axis=axis % first.ndim)


def concat_channels(*tensors: Tensor) -> Tensor:
    """Stack maps along the channel axis; spatial extents must match."""
    if len(tensors) < 2:
        raise InvalidInputError("concat_channels needs at least two tensors")
    axis = _channel_axis(tensors[0])
    first = tensors[0]
    for other in tensors[1:]:
        if other.ndim != first.ndim or other.shape[axis + 1:] != first.shape[axis + 1:] \
                or other.shape[:axis] != first.shape[:axis]:
            raise ShapeError(f"concat_channels: spatial mismatch {first.shape} vs {other.shape}")
    return Concat.apply(*tensors, axis=axis)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    axis = axis % x.ndim
    if not 0 <= start < stop <= x.shape[axis]:
        raise ShapeError(f"slice [{start}, {stop}) out of range for axis {axis} of {x.shape}")
    return SliceAxis.apply(x, axis=axis, start=start, stop=stop)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    return slice_axis(x, _channel_axis(x), start, stop)


def reduce(kind: str, x: Tensor, axes: Axes = None, keepdims: bool = False) -> Tensor:
    """
    Sum or mean over the given axes (all axes when None).
    """
    if kind == 'sum':
        return Sum.apply(x, axes=axes, keepdims=keepdims)
    if kind == 'mean':
        return Mean.apply(x, axes=axes, keepdims=keepdims)
    raise InvalidInputError(f"unknown reduction {kind!r}")


def softmax(x: Tensor, axis: int) -> Tensor:
    return Softmax.apply(x, axis=axis % x.ndim)


def softmax_channels(x: Tensor) -> Tensor:
    """Per-pixel distribution over the channel axis of (N,L,H,W) or (L,H,W) logits."""
    return softmax(x, _channel_axis(x))


def conv2d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: Optional[int] = None) -> Tensor:
    """
    2D cross-correlation over a batch of maps.

    Args:
        x: (N, C_in, H, W) input
        kernel: (C_out, C_in, k, k) weights
        bias: optional (C_out,) offsets
        stride: window step
        padding: zero padding per side; defaults to (k - 1) // 2, which keeps
            H x W for odd kernels at stride 1

    Returns:
        (N, C_out, H', W') output
    """
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and kernel, got input {x.shape} and kernel {kernel.shape}")
    if x.shape[1] != kernel.shape[1]:
        raise ShapeError(
            f"conv2d channel mismatch: input {x.shape} has C_in={x.shape[1]} "
            f"but kernel {kernel.shape} expects C_in={kernel.shape[1]}"
        )
    if bias is not None and bias.shape != (kernel.shape[0],):
        raise ShapeError(f"conv2d bias {bias.shape} does not match kernel {kernel.shape}")
    if padding is None:
        padding = (kernel.shape[2] - 1) // 2
    operands = (x, kernel) if bias is None else (x, kernel, bias)
    return Conv2d.apply(*operands, stride=stride, padding=padding)


def maxpool2d(x: Tensor, window: int = 2, stride: int = 2) -> Tuple[Tensor, np.ndarray]:
    """
    Non-overlapping max pooling.

    Returns:
        Pooled tensor and the argmax index (row-major within each window)
    """
    if window != stride:
        raise InvalidInputError(f"maxpool2d supports non-overlapping windows only (window={window}, stride={stride})")
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d expects a 4-d input, got {x.shape}")
    h, w = x.shape[2], x.shape[3]
    if h % window or w % window:
        raise ShapeError(f"maxpool2d needs spatial extents divisible by {window}, got {h}x{w}")
    out = MaxPool2d.apply(x, window=window)
    func = out._creator
    if func is None:
        # graph not recorded; recompute indices for the caller
        blocks = x.data.reshape(x.shape[0], x.shape[1], h // window, window, w // window, window)
        blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(*out.shape, window * window)
        return out, blocks.argmax(axis=-1)
    return out, func.argmax


def upsample_bilinear(x: Tensor, factor: int) -> Tensor:
    """Bilinear resize by an integer factor (align-corners false)."""
    if x.ndim != 4:
        raise ShapeError(f"upsample_bilinear expects a 4-d input, got {x.shape}")
    if factor < 1:
        raise InvalidInputError(f"upsampling factor must be >= 1, got {factor}")
    if factor == 1:
        return x
    return UpsampleBilinear.apply(x, factor=factor)


def upsample_bilinear2x(x: Tensor) -> Tensor:
    return upsample_bilinear(x, 2)


def batchnorm2d(x: Tensor, scale: Tensor, shift: Tensor,
                running_mean: np.ndarray, running_var: np.ndarray,
                mode: Union[str, Mode] = Mode.TRAIN,
                momentum: float = BN_MOMENTUM, eps: float = BN_EPSILON) -> Tensor:
    """
    Batch normalization over (N, H, W) per channel.

    Train mode normalizes by batch statistics and updates the running
    statistics in place; eval mode normalizes by the running statistics.
    """
    mode = as_mode(mode)
    if x.ndim != 4:
        raise ShapeError(f"batchnorm2d expects a 4-d input, got {x.shape}")
    channels = x.shape[1]
    for label, value in (('scale', scale.shape), ('shift', shift.shape),
                         ('running_mean', running_mean.shape), ('running_var', running_var.shape)):
        if value != (channels,):
            raise ShapeError(f"batchnorm2d {label} has shape {value}, input {x.shape} has {channels} channels")
    return BatchNorm2d.apply(x, scale, shift, running_mean=running_mean, running_var=running_var,
                             training=mode is Mode.TRAIN, momentum=momentum, eps=eps)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map x @ W^T + b for x of shape (N, F_in) and W of shape (F_out, F_in)."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
    operands = (x, weight) if bias is None else (x, weight, bias)
    return Linear.apply(*operands)


def dropout(x: Tensor, rate: float, mode: Union[str, Mode],
            rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate).
    Eval mode and rate 0 return the input unchanged.
    """
    if not 0.0 <= rate < 1.0:
        raise InvalidInputError(f"dropout rate must lie in [0, 1), got {rate}")
    mode = as_mode(mode)
    if mode is Mode.EVAL or rate == 0.0:
        return x
    if rng is None:
        raise InvalidInputError("train-mode dropout needs an explicit random generator")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return Mul.apply(x, Tensor(keep))
