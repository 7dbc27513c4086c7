"""Spatial, time-aware temporal and cross attention with multi-head splitting."""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from mstformer.core import nn, ops
from mstformer.core.tensor import Tensor
from mstformer.exceptions import ConfigurationError, ContractError


@dataclass(frozen=True)
class TimeScaleMatrix:
    """ω[i, j] = 1 / (1 + exp(α·|t_i − t_j| − β)), shape [..., L, L]."""

    omega: np.ndarray
    alpha: float
    beta: float

    @property
    def length(self) -> int:
        return self.omega.shape[-1]

    @classmethod
    def ones(cls, batch: int, length: int) -> "TimeScaleMatrix":
        """Neutral scaling (time-aware attention switched off)."""
        return cls(np.ones((batch, length, length)), alpha=0.0, beta=float("inf"))


def time_scale_matrix(timestamps: np.ndarray, alpha: float, beta: float) -> TimeScaleMatrix:
    """Full (symmetric) matrix; any causal restriction is applied by masks downstream."""
    if alpha < 0:
        raise ConfigurationError(f"alpha must be non-negative, got {alpha}")
    t = np.asarray(timestamps, dtype=np.float64)
    gap = np.abs(t[..., :, None] - t[..., None, :])
    return TimeScaleMatrix(expit(beta - alpha * gap), alpha, beta)


def causal_mask(length: int) -> np.ndarray:
    """True above the diagonal: position i may not see j > i."""
    return np.triu(np.ones((length, length), dtype=bool), k=1)


def visit_mask(length: int, tokens_per_visit: int) -> np.ndarray:
    """[L, L·N_s] mask letting query visit i see the tokens of visits j <= i."""
    visit_of_key = np.repeat(np.arange(length), tokens_per_visit)
    return visit_of_key[None, :] > np.arange(length)[:, None]


def attention_weights(
    q: Tensor,
    k: Tensor,
    omega: Optional[np.ndarray] = None,
    mask: Optional[np.ndarray] = None,
) -> Tensor:
    """softmax(((Q Kᵀ) * ω) / √d) with masked positions filled before the softmax."""
    scores = ops.matmul(q, ops.transpose(k, -2, -1))
    if omega is not None:
        scores = ops.mul(scores, Tensor(omega))
    scores = ops.mul(scores, 1.0 / np.sqrt(q.shape[-1]))
    if mask is not None:
        scores = ops.masked_fill(scores, mask)
    return ops.softmax(scores, axis=-1)


def dot_product_attention(q: Tensor, k: Tensor, v: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    return ops.matmul(attention_weights(q, k, mask=mask), v)


def time_aware_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    omega: np.ndarray,
    mask: Optional[np.ndarray] = None,
) -> Tensor:
    if omega.shape[-1] != k.shape[-2] or omega.shape[-2] != q.shape[-2]:
        raise ContractError(
            f"omega {omega.shape} does not match sequence lengths {q.shape[-2]}x{k.shape[-2]}"
        )
    return ops.matmul(attention_weights(q, k, omega=omega, mask=mask), v)


AttentionKernel = Callable[..., Tensor]


def split_heads(x: Tensor, num_heads: int) -> Tensor:
    """[..., T, d] -> [..., Z, T, d/Z]."""
    *lead, length, width = x.shape
    x = ops.reshape(x, (*lead, length, num_heads, width // num_heads))
    return ops.transpose(x, -3, -2)


def merge_heads(x: Tensor) -> Tensor:
    """[..., Z, T, d/Z] -> [..., T, d]."""
    x = ops.transpose(x, -3, -2)
    *lead, length, heads, width = x.shape
    return ops.reshape(x, (*lead, length, heads * width))


def multi_head(
    kernel: AttentionKernel,
    query: Tensor,
    key_value: Tensor,
    num_heads: int,
    params,
    prefix: str,
    **kernel_args,
) -> Tensor:
    """Project, split into Z heads, run ``kernel`` per head, concatenate, project.

    Masks and ω given in ``kernel_args`` must broadcast against [..., Z, T, T'].
    """
    width = query.shape[-1]
    if width % num_heads:
        raise ConfigurationError(f"width {width} not divisible by {num_heads} heads")
    q = nn.linear(query, params[f"{prefix}.q.weight"], params[f"{prefix}.q.bias"])
    k = nn.linear(key_value, params[f"{prefix}.k.weight"], params[f"{prefix}.k.bias"])
    v = nn.linear(key_value, params[f"{prefix}.v.weight"], params[f"{prefix}.v.bias"])
    heads = kernel(split_heads(q, num_heads), split_heads(k, num_heads), split_heads(v, num_heads), **kernel_args)
    return nn.linear(merge_heads(heads), params[f"{prefix}.o.weight"], params[f"{prefix}.o.bias"])


def spatial_attention(tokens: Tensor, params, prefix: str, num_heads: int) -> Tensor:
    """Self-attention over the N patches of each image; batch and time merged."""
    batch, length, count, width = tokens.shape
    x = ops.reshape(tokens, (batch * length, count, width))
    out = multi_head(dot_product_attention, x, x, num_heads, params, prefix)
    return ops.reshape(out, (batch, length, count, width))


def _head_omega(omega: TimeScaleMatrix, batch: int) -> np.ndarray:
    """[B, L, L] or [L, L] -> [B, 1, L, L] (head axis for broadcasting)."""
    scales = np.asarray(omega.omega, dtype=np.float64)
    if scales.ndim == 2:
        scales = np.broadcast_to(scales, (batch,) + scales.shape)
    return scales[:, None]


def sequence_attention(
    x: Tensor,
    omega: Optional[TimeScaleMatrix],
    causal: bool,
    params,
    prefix: str,
    num_heads: int,
) -> Tensor:
    """Time-aware self-attention over a [B, L, d] sequence (the decoder path)."""
    batch, length, _ = x.shape
    mask = causal_mask(length) if causal else None
    if omega is None:
        return multi_head(dot_product_attention, x, x, num_heads, params, prefix, mask=mask)
    if omega.length != length:
        raise ContractError(f"omega covers {omega.length} visits, sequence has {length}")
    return multi_head(
        time_aware_attention, x, x, num_heads, params, prefix, omega=_head_omega(omega, batch), mask=mask
    )


def temporal_attention(
    tokens: Tensor,
    omega: Optional[TimeScaleMatrix],
    causal: bool,
    params,
    prefix: str,
    num_heads: int,
) -> Tensor:
    """Self-attention over the L visits at each patch position; batch and space merged."""
    batch, length, count, width = tokens.shape
    if omega is not None and omega.length != length:
        raise ContractError(f"omega covers {omega.length} visits, clip has {length}")
    x = ops.reshape(ops.permute(tokens, (0, 2, 1, 3)), (batch * count, length, width))
    mask = causal_mask(length) if causal else None
    if omega is None:
        out = multi_head(dot_product_attention, x, x, num_heads, params, prefix, mask=mask)
    else:
        scales = _head_omega(omega, batch)  # [B, 1, L, L]
        scales = np.broadcast_to(scales[:, None], (batch, count, 1, length, length))
        scales = scales.reshape(batch * count, 1, length, length)
        out = multi_head(time_aware_attention, x, x, num_heads, params, prefix, omega=scales, mask=mask)
    out = ops.reshape(out, (batch, count, length, width))
    return ops.permute(out, (0, 2, 1, 3))


def cross_attention(dec: Tensor, enc: Tensor, params, prefix: str, num_heads: int) -> Tensor:
    """Decoder visit i attends the encoder tokens of visits j <= i."""
    batch, length, count, width = enc.shape
    if dec.shape[:2] != (batch, length):
        raise ContractError(f"decoder {dec.shape} and encoder {enc.shape} disagree on [B, L]")
    memory = ops.reshape(enc, (batch, length * count, width))
    mask = visit_mask(length, count)
    return multi_head(dot_product_attention, dec, memory, num_heads, params, prefix, mask=mask)
