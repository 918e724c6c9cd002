"""Differentiable kernels.

Each op computes with numpy and registers a vector-Jacobian product on the
active tape. Broadcasting is limited to what numpy does for the elementwise
binary ops; gradients are summed back to the input shape.
"""
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from cpcssl.autodiff.counter import add_macs
from cpcssl.autodiff.tensor import Tensor, active_tape
from cpcssl.core.exceptions import ShapeError

Operand = Union[Tensor, float, int, np.ndarray]


def as_tensor(x: Operand) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _emit(op: str, value: np.ndarray, inputs: Sequence[Tensor], vjp) -> Tensor:
    out = Tensor(value)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape = active_tape()
        if tape is not None:
            tape.record(op, out, inputs, vjp)
    return out


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# Elementwise


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit("mul", a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit("div", a.data / b.data, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))


def neg(a: Operand) -> Tensor:
    a = as_tensor(a)
    return _emit("neg", -a.data, (a,), lambda g: (-g,))


def exp(a: Operand) -> Tensor:
    a = as_tensor(a)
    value = np.exp(a.data)
    return _emit("exp", value, (a,), lambda g: (g * value,))


def log(a: Operand) -> Tensor:
    a = as_tensor(a)
    return _emit("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def tanh(a: Operand) -> Tensor:
    a = as_tensor(a)
    value = np.tanh(a.data)
    return _emit("tanh", value, (a,), lambda g: (g * (1.0 - value * value),))


def sigmoid(a: Operand) -> Tensor:
    a = as_tensor(a)
    value = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _emit("sigmoid", value, (a,), lambda g: (g * value * (1.0 - value),))


def relu(a: Operand) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _emit("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def clamp(a: Operand, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    mask = (a.data >= lo) & (a.data <= hi)
    return _emit("clamp", np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


# Reductions and shape plumbing


def sum(a: Operand, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit("sum", a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a: Operand, axis: Optional[int] = None) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis), 1.0 / count)


def max(a: Operand, axis: int) -> Tensor:  # noqa: A001
    """Max over ``axis``; the gradient goes to the first maximal entry."""
    a = as_tensor(a)
    arg = np.expand_dims(np.argmax(a.data, axis=axis), axis)

    def vjp(g):
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, arg, np.expand_dims(g, axis), axis)
        return (grad,)

    return _emit("max", np.take_along_axis(a.data, arg, axis).squeeze(axis), (a,), vjp)


def reshape(a: Operand, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    return _emit("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Operand, axes: Optional[Tuple[int, ...]] = None) -> Tensor:
    a = as_tensor(a)
    inverse = None if axes is None else tuple(np.argsort(axes))
    return _emit("transpose", np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def concat(tensors: Sequence[Operand], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _emit("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors,
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def index(a: Operand, key) -> Tensor:
    """Basic slicing (ints and slices)."""
    a = as_tensor(a)

    def vjp(g):
        grad = np.zeros_like(a.data)
        grad[key] += g
        return (grad,)

    return _emit("index", a.data[key], (a,), vjp)


def take(a: Operand, indices: np.ndarray) -> Tensor:
    """Gather rows of ``a`` (axis 0); repeated indices accumulate gradient."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.int64)

    def vjp(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, indices, g)
        return (grad,)

    return _emit("take", np.take(a.data, indices, axis=0), (a,), vjp)


def pick(a: Operand, indices: np.ndarray) -> Tensor:
    """Select one entry per row along the last axis."""
    a = as_tensor(a)
    idx = np.expand_dims(np.asarray(indices, dtype=np.int64), -1)
    if idx.shape[:-1] != a.shape[:-1]:
        raise ShapeError(f"pick indices of shape {idx.shape[:-1]} do not match rows of {a.shape}")
    if np.any(idx < 0) or np.any(idx >= a.shape[-1]):
        raise IndexError(f"pick index out of range for last axis of size {a.shape[-1]}")

    def vjp(g):
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, idx, np.expand_dims(g, -1), -1)
        return (grad,)

    return _emit("pick", np.take_along_axis(a.data, idx, -1)[..., 0], (a,), vjp)


# Softmax family


def log_softmax(logits: Operand, axis: int = -1) -> Tensor:
    """``logits - logsumexp(logits)`` with max subtraction."""
    logits = as_tensor(logits)
    if logits.shape[axis] < 1:
        raise ShapeError(f"log_softmax needs at least one entry, got shape {logits.shape}")
    shifted = logits.data - logits.data.max(axis=axis, keepdims=True)
    value = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probs = np.exp(value)
    return _emit("log_softmax", value, (logits,),
                 lambda g: (g - probs * g.sum(axis=axis, keepdims=True),))


def logsumexp(a: Operand, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    top = a.data.max(axis=axis, keepdims=True)
    total = np.exp(a.data - top).sum(axis=axis, keepdims=True)
    value = (top + np.log(total)).squeeze(axis)
    probs = np.exp(a.data - top) / total
    return _emit("logsumexp", value, (a,), lambda g: (np.expand_dims(g, axis) * probs,))


def softmax(a: Operand, axis: int = -1) -> Tensor:
    return exp(log_softmax(a, axis=axis))


# Linear algebra


def matmul(a: Operand, b: Operand) -> Tensor:
    """Matrix product for 1-D/2-D operands, counted in multiply-accumulates."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    value = a.data @ b.data
    add_macs(a.size * (b.shape[1] if b.ndim == 2 else 1))

    def vjp(g):
        if a.ndim == 2 and b.ndim == 2:
            return g @ b.data.T, a.data.T @ g
        if a.ndim == 2:
            return np.outer(g, b.data), a.data.T @ g
        if b.ndim == 2:
            return b.data @ g, np.outer(a.data, g)
        return g * b.data, g * a.data

    return _emit("matmul", value, (a, b), vjp)


def conv2d(input: Operand, kernels: Operand, stride: int = 1) -> Tensor:  # noqa: A002
    """Valid cross-correlation of ``C×H×W`` (or ``B×C×H×W``) with ``F×C×h×w`` kernels."""
    x, k = as_tensor(input), as_tensor(kernels)
    batched = x.ndim == 4
    xd = x.data if batched else x.data[None]
    if xd.ndim != 4 or k.ndim != 4:
        raise ShapeError(f"conv2d expects C×H×W input and F×C×h×w kernels, got {x.shape} and {k.shape}")
    if stride < 1:
        raise ShapeError(f"conv2d stride must be positive, got {stride}")
    n, c, height, width = xd.shape
    f, kc, kh, kw = k.shape
    if kc != c:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape}, kernels {k.shape}")
    if kh > height or kw > width:
        raise ShapeError(f"conv2d kernel {kh}×{kw} larger than input {height}×{width}")

    windows = sliding_window_view(xd, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    value = np.tensordot(windows, k.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    add_macs(n * f * out_h * out_w * c * kh * kw)

    def vjp(g):
        g = g if batched else g[None]
        gk = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        gx = np.zeros_like(xd)
        for i in range(kh):
            rows = slice(i, i + stride * (out_h - 1) + 1, stride)
            for j in range(kw):
                cols = slice(j, j + stride * (out_w - 1) + 1, stride)
                gx[:, :, rows, cols] += np.tensordot(g, k.data[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
        return (gx if batched else gx[0]), gk

    return _emit("conv2d", value if batched else value[0], (x, k), vjp)


def conv1d(input: Operand, kernels: Operand) -> Tensor:  # noqa: A002
    """Valid 1-D convolution of ``B×L×E`` sequences with ``F×w×E`` kernels, giving ``B×L'×F``."""
    x, k = as_tensor(input), as_tensor(kernels)
    if x.ndim != 3 or k.ndim != 3 or x.shape[2] != k.shape[2]:
        raise ShapeError(f"conv1d expects B×L×E input and F×w×E kernels, got {x.shape} and {k.shape}")
    n, length, e = x.shape
    f, w, _ = k.shape
    if w > length:
        raise ShapeError(f"conv1d kernel width {w} larger than sequence length {length}")

    windows = sliding_window_view(x.data, w, axis=1)  # B×L'×E×w
    out_len = windows.shape[1]
    value = np.tensordot(windows, k.data, axes=([2, 3], [2, 1]))
    add_macs(n * out_len * f * w * e)

    def vjp(g):
        gk = np.tensordot(g, windows, axes=([0, 1], [0, 1])).transpose(0, 2, 1)
        gx = np.zeros_like(x.data)
        for j in range(w):
            gx[:, j:j + out_len, :] += g @ k.data[:, j, :]
        return gx, gk

    return _emit("conv1d", value, (x, k), vjp)


# Recurrent cell


class GruWeights(NamedTuple):
    """Gate weights in row-vector convention: ``gate = [x; h] @ w + b``."""

    w_update: Tensor
    b_update: Tensor
    w_reset: Tensor
    b_reset: Tensor
    w_candidate: Tensor
    b_candidate: Tensor


def gru_cell(h_prev: Operand, x: Operand, params: GruWeights) -> Tensor:
    """One GRU step; works on single vectors or on a batch of rows.

    u = sigmoid([x; h] W_u + b_u), r = sigmoid([x; h] W_r + b_r),
    h~ = tanh([x; r*h] W_h + b_h), h = (1 - u) * h_prev + u * h~.
    """
    h_prev, x = as_tensor(h_prev), as_tensor(x)
    d = h_prev.shape[-1]
    e = x.shape[-1]
    for name, w in (("update", params.w_update), ("reset", params.w_reset), ("candidate", params.w_candidate)):
        if w.shape != (e + d, d):
            raise ShapeError(f"gru {name} weight has shape {w.shape}, expected {(e + d, d)}")
    if h_prev.shape[:-1] != x.shape[:-1]:
        raise ShapeError(f"gru state {h_prev.shape} and input {x.shape} disagree on batch shape")

    axis = x.ndim - 1
    xh = concat([x, h_prev], axis=axis)
    u = sigmoid(add(matmul(xh, params.w_update), params.b_update))
    r = sigmoid(add(matmul(xh, params.w_reset), params.b_reset))
    candidate = tanh(add(matmul(concat([x, mul(r, h_prev)], axis=axis), params.w_candidate), params.b_candidate))
    return add(mul(sub(1.0, u), h_prev), mul(u, candidate))
