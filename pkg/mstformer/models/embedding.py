"""Patch tokens, sinusoidal space-time encodings and label embeddings."""
from dataclasses import dataclass
from typing import Union

import numpy as np

from mstformer.core import nn, ops
from mstformer.core.tensor import Tensor
from mstformer.exceptions import ConfigurationError, ContractError, DatasetError

ENCODING_BASE = 10000.0


@dataclass
class ClipBatch:
    """B clips of L input visits each.

    ``target_labels[b, l]`` is the label of the visit after ``l``.
    """

    images: np.ndarray  # [B, L, H, W, C]
    timestamps: np.ndarray  # [B, L], years
    input_labels: np.ndarray  # [B, L]
    target_labels: np.ndarray  # [B, L]

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.input_labels = np.asarray(self.input_labels, dtype=np.int64)
        self.target_labels = np.asarray(self.target_labels, dtype=np.int64)
        if self.images.ndim != 5:
            raise ContractError(f"images must be [B, L, H, W, C], got {self.images.shape}")
        batch, length = self.images.shape[:2]
        for field_name in ("timestamps", "input_labels", "target_labels"):
            if getattr(self, field_name).shape != (batch, length):
                raise ContractError(
                    f"{field_name} must be shaped {(batch, length)}, got {getattr(self, field_name).shape}"
                )
        if length > 1 and np.any(np.diff(self.timestamps, axis=1) <= 0):
            raise DatasetError("timestamps must be strictly increasing within each clip")

    @property
    def batch_size(self) -> int:
        return self.images.shape[0]

    @property
    def length(self) -> int:
        return self.images.shape[1]


@dataclass
class TokenGrid:
    tokens: Tensor  # [B, L, N, d_m]
    grid_h: int
    grid_w: int

    @property
    def num_tokens(self) -> int:
        return self.grid_h * self.grid_w


def patchify(images: Union[Tensor, np.ndarray], patch_size: int) -> Tensor:
    """[B, L, H, W, C] -> [B, L, N, p·p·C], patches in row-major grid order."""
    images = ops.as_tensor(images)
    batch, length, height, width, channels = images.shape
    if height % patch_size or width % patch_size:
        raise ConfigurationError(
            f"image {height}x{width} is not divisible by patch size {patch_size}"
        )
    gh, gw = height // patch_size, width // patch_size
    x = ops.reshape(images, (batch, length, gh, patch_size, gw, patch_size, channels))
    x = ops.permute(x, (0, 1, 2, 4, 3, 5, 6))
    return ops.reshape(x, (batch, length, gh * gw, patch_size * patch_size * channels))


def patch_embed(
    images: Union[Tensor, np.ndarray],
    patch_size: int,
    d_model: int,
    weight: Tensor,
    bias: Tensor,
) -> TokenGrid:
    """Kernel-p, stride-p convolution to ``d_model`` channels, as a linear map on patches."""
    patches = patchify(images, patch_size)
    if weight.shape != (patches.shape[-1], d_model):
        raise ConfigurationError(
            f"patch weight {weight.shape} does not map {patches.shape[-1]} -> {d_model}"
        )
    height, width = images.shape[2], images.shape[3]
    tokens = nn.linear(patches, weight, bias)
    return TokenGrid(tokens, height // patch_size, width // patch_size)


def _frequencies(d_model: int) -> np.ndarray:
    if d_model % 2:
        raise ConfigurationError(f"d_model must be even, got {d_model}")
    return ENCODING_BASE ** (np.arange(0, d_model, 2) / d_model)


def _elapsed(timestamps: np.ndarray) -> np.ndarray:
    timestamps = np.asarray(timestamps, dtype=np.float64)
    return np.abs(timestamps - timestamps[..., :1])


def time_encode(timestamps: np.ndarray, d_model: int) -> Tensor:
    """[..., L] -> [..., L, d_model]: sin/cos of elapsed time since the first visit."""
    freqs = _frequencies(d_model)
    angle = _elapsed(timestamps)[..., None] / freqs
    out = np.empty(angle.shape[:-1] + (d_model,))
    out[..., 0::2] = np.sin(angle)
    out[..., 1::2] = np.cos(angle)
    return Tensor(out)


def stp_encode(timestamps: np.ndarray, num_tokens: int, d_model: int) -> Tensor:
    """[..., L] -> [..., L, N, d_model]: elapsed-time and patch-index sinusoids, summed."""
    freqs = _frequencies(d_model)
    time_angle = _elapsed(timestamps)[..., None, None] / freqs  # [..., L, 1, d/2]
    space_angle = np.arange(num_tokens, dtype=np.float64)[:, None] / freqs  # [N, d/2]
    even = np.sin(time_angle) + np.sin(space_angle)
    odd = np.cos(time_angle) + np.cos(space_angle)
    out = np.empty(even.shape[:-1] + (d_model,))
    out[..., 0::2] = even
    out[..., 1::2] = odd
    return Tensor(out)


def label_embed(labels: np.ndarray, num_classes: int, d_model: int, table: Tensor) -> Tensor:
    """Learned k x d_model lookup."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DatasetError(
            f"label outside [0, {num_classes}): min={labels.min()}, max={labels.max()}"
        )
    if table.shape != (num_classes, d_model):
        raise ConfigurationError(f"label table {table.shape} != {(num_classes, d_model)}")
    return nn.embedding(table, labels.astype(np.int64))
