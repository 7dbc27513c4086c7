"""Layer-level building blocks composed from the primitives in ``ops``."""
from typing import Optional

import numpy as np

from mstformer.core import ops
from mstformer.core.tensor import DTYPE, Tensor
from mstformer.exceptions import ContractError, DimensionError

LAYER_NORM_EPS = 1e-5


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight + bias`` with weight stored as [in, out]."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise DimensionError("linear", x.shape, weight.shape)
    flat = ops.reshape(x, (-1, x.shape[-1])) if x.ndim != 2 else x
    out = ops.matmul(flat, weight)
    if bias is not None:
        out = ops.add(out, bias)
    return ops.reshape(out, x.shape[:-1] + (weight.shape[1],)) if x.ndim != 2 else out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalise over the last axis, then apply the learnable scale and shift."""
    centered = ops.sub(x, ops.mean(x, axis=-1, keepdims=True))
    variance = ops.mean(ops.mul(centered, centered), axis=-1, keepdims=True)
    normed = ops.mul(centered, ops.power(ops.add(variance, eps), -0.5))
    return ops.add(ops.mul(normed, gamma), beta)


def embedding(table: Tensor, indices: np.ndarray) -> Tensor:
    """Row lookup; gradient reaches only the rows that were read."""
    indices = np.asarray(indices)
    if not np.issubdtype(indices.dtype, np.integer):
        raise ContractError(f"embedding indices must be integers, got {indices.dtype}")
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise ContractError(
            f"embedding index out of range [0, {table.shape[0]}): "
            f"min={indices.min()}, max={indices.max()}"
        )
    return ops.index(table, indices)


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout; identity when ``rate`` is 0 or no generator is given."""
    if rate <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate).astype(DTYPE) / (1.0 - rate)
    return ops.mul(x, Tensor(keep))


def feed_forward(x: Tensor, params, prefix: str) -> Tensor:
    """Two-layer position-wise MLP with a GELU in between."""
    hidden = ops.gelu(linear(x, params[f"{prefix}.fc1.weight"], params[f"{prefix}.fc1.bias"]))
    return linear(hidden, params[f"{prefix}.fc2.weight"], params[f"{prefix}.fc2.bias"])
