"""Differentiable primitives. Each op records its gradient rule on the output."""
from typing import Sequence, Tuple, Union

import numpy as np

from mstformer.core.tensor import DTYPE, Tensor
from mstformer.exceptions import ContractError, DimensionError

Operand = Union[Tensor, float, int, np.ndarray]

MASK_VALUE = -1e9
GELU_C = np.sqrt(2.0 / np.pi)
GELU_A = 0.044715


def as_tensor(x: Operand) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` back down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(op, a.shape, b.shape) from None


# -- elementwise -------------------------------------------------------------


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)
    return Tensor.from_op(
        a.data + b.data,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)),
        "add",
    )


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)
    return Tensor.from_op(
        a.data - b.data,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)
    return Tensor.from_op(
        a.data * b.data,
        (a, b),
        lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("div", a, b)
    out = a.data / b.data
    return Tensor.from_op(
        out,
        (a, b),
        lambda g: (unbroadcast(g / b.data, a.shape), unbroadcast(-g * out / b.data, b.shape)),
        "div",
    )


def neg(a: Operand) -> Tensor:
    a = as_tensor(a)
    return Tensor.from_op(-a.data, (a,), lambda g: (-g,), "neg")


def power(a: Operand, exponent: float) -> Tensor:
    """Elementwise ``a ** exponent`` for a constant exponent."""
    a = as_tensor(a)
    exponent = float(exponent)
    return Tensor.from_op(
        a.data**exponent,
        (a,),
        lambda g: (g * exponent * a.data ** (exponent - 1.0),),
        "pow",
    )


def exp(a: Operand) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * out,), "exp")


def log(a: Operand) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise ContractError("log() of a non-positive value")
    return Tensor.from_op(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sin(a: Operand) -> Tensor:
    a = as_tensor(a)
    return Tensor.from_op(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),), "sin")


def cos(a: Operand) -> Tensor:
    a = as_tensor(a)
    return Tensor.from_op(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),), "cos")


def tanh(a: Operand) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def gelu(a: Operand) -> Tensor:
    """Gaussian-error linear unit, tanh form."""
    a = as_tensor(a)
    x = a.data
    t = np.tanh(GELU_C * (x + GELU_A * x**3))

    def grad_fn(g):
        dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * dt),)

    return Tensor.from_op(0.5 * x * (1.0 + t), (a,), grad_fn, "gelu")


def masked_fill(a: Operand, mask: np.ndarray, value: float = MASK_VALUE) -> Tensor:
    """Replace positions where ``mask`` is true by ``value``; no gradient flows there."""
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    try:
        full = np.broadcast_to(mask, a.shape)
    except ValueError:
        raise DimensionError("masked_fill", a.shape, mask.shape) from None
    return Tensor.from_op(
        np.where(full, value, a.data),
        (a,),
        lambda g: (np.where(full, 0.0, g),),
        "masked_fill",
    )


# -- linear algebra ----------------------------------------------------------


def matmul(a: Operand, b: Operand) -> Tensor:
    """Batched matrix product over the last two axes, batch axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError("matmul", a.shape, b.shape) from None

    def grad_fn(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return Tensor.from_op(a.data @ b.data, (a, b), grad_fn, "matmul")


# -- reductions and normalisers ---------------------------------------------


def _normalize_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise ContractError(f"axis {axis} out of range for {ndim}-d tensor")
    return axis % ndim


def sum(a: Operand, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            g = np.expand_dims(g, tuple(_normalize_axis(ax, a.ndim) for ax in axes))
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor.from_op(out, (a,), grad_fn, "sum")


def mean(a: Operand, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    total = sum(a, axis=axis, keepdims=keepdims)
    count = a.size // max(total.size, 1) if axis is not None else a.size
    return mul(total, 1.0 / count)


def softmax(a: Operand, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    axis = _normalize_axis(axis, a.ndim)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(out, (a,), grad_fn, "softmax")


def log_softmax(a: Operand, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    axis = _normalize_axis(axis, a.ndim)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def grad_fn(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return Tensor.from_op(out, (a,), grad_fn, "log_softmax")


# -- shape manipulation -----------------------------------------------------


def reshape(a: Operand, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise DimensionError("reshape", a.shape, tuple(shape)) from None
    return Tensor.from_op(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def permute(a: Operand, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    if sorted(_normalize_axis(ax, a.ndim) for ax in axes) != list(range(a.ndim)):
        raise ContractError(f"permute: {axes} is not a permutation of {a.ndim} axes")
    inverse = tuple(np.argsort([_normalize_axis(ax, a.ndim) for ax in axes]))
    return Tensor.from_op(
        np.transpose(a.data, axes),
        (a,),
        lambda g: (np.transpose(g, inverse),),
        "permute",
    )


def transpose(a: Operand, axis1: int = -2, axis2: int = -1) -> Tensor:
    """Swap two axes."""
    a = as_tensor(a)
    axes = list(range(a.ndim))
    i, j = _normalize_axis(axis1, a.ndim), _normalize_axis(axis2, a.ndim)
    axes[i], axes[j] = axes[j], axes[i]
    return permute(a, axes)


def index(a: Operand, key) -> Tensor:
    """Basic or advanced indexing (slicing); repeated indices accumulate gradient."""
    a = as_tensor(a)
    try:
        out = a.data[key]
    except IndexError as exc:
        raise ContractError(f"index {key!r} invalid for shape {a.shape}: {exc}") from None

    def grad_fn(g):
        full = np.zeros(a.shape, dtype=DTYPE)
        np.add.at(full, key, g)
        return (full,)

    return Tensor.from_op(out, (a,), grad_fn, "index")


def concat(tensors: Sequence[Operand], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ContractError("concat needs at least one tensor")
    axis = _normalize_axis(axis, parts[0].ndim)
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise DimensionError("concat", *(p.shape for p in parts)) from None
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor.from_op(out, parts, grad_fn, "concat")


# -- operator overloads ------------------------------------------------------

Tensor.__add__ = add
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = sub
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = mul
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = div
Tensor.__rtruediv__ = lambda self, other: div(other, self)
Tensor.__neg__ = neg
Tensor.__pow__ = power
Tensor.__matmul__ = matmul
Tensor.__getitem__ = index
Tensor.reshape = lambda self, *shape: reshape(
    self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape
)
Tensor.sum = lambda self, axis=None, keepdims=False: sum(self, axis, keepdims)
Tensor.mean = lambda self, axis=None, keepdims=False: mean(self, axis, keepdims)
