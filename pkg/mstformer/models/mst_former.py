"""Multi-scale encoder-decoder forecasting the label of the next visit."""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from mstformer.core import nn, ops
from mstformer.core.tensor import Tensor, no_grad
from mstformer.exceptions import ConfigurationError
from mstformer.models.attention import (
    TimeScaleMatrix,
    cross_attention,
    sequence_attention,
    spatial_attention,
    temporal_attention,
    time_scale_matrix,
)
from mstformer.models.embedding import (
    ClipBatch,
    TokenGrid,
    label_embed,
    patch_embed,
    stp_encode,
    time_encode,
)
from mstformer.models.params import ModelParams
from mstformer.schemas.config import ModelConfig

logger = logging.getLogger(__name__)


def scale_transition(grid: TokenGrid, gamma: int, weight: Tensor, bias: Tensor) -> TokenGrid:
    """Merge each γ×γ neighbourhood of tokens into one through a linear map."""
    tokens = grid.tokens
    batch, length, count, width = tokens.shape
    h, w = grid.grid_h, grid.grid_w
    if count != h * w:
        raise ConfigurationError(f"{count} tokens do not form a {h}x{w} grid")
    if h % gamma or w % gamma:
        raise ConfigurationError(f"token grid {h}x{w} is not divisible by gamma={gamma}")
    if weight.shape != (gamma * gamma * width, width):
        raise ConfigurationError(f"merge weight {weight.shape} does not map {gamma * gamma * width} -> {width}")
    nh, nw = h // gamma, w // gamma
    x = ops.reshape(tokens, (batch, length, nh, gamma, nw, gamma, width))
    x = ops.permute(x, (0, 1, 2, 4, 3, 5, 6))
    x = ops.reshape(x, (batch, length, nh * nw, gamma * gamma * width))
    return TokenGrid(nn.linear(x, weight, bias), nh, nw)


def _norm(x: Tensor, params, prefix: str) -> Tensor:
    return nn.layer_norm(x, params[f"{prefix}.gamma"], params[f"{prefix}.beta"])


def encoder_block(
    tokens: Tensor,
    omega: Optional[TimeScaleMatrix],
    config: ModelConfig,
    params,
    prefix: str,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Pre-norm residual spatial attention, temporal attention, feed-forward."""
    heads = config.num_heads
    x = tokens
    h = spatial_attention(_norm(x, params, f"{prefix}.norm1"), params, f"{prefix}.spatial", heads)
    x = ops.add(x, nn.dropout(h, config.dropout, rng))
    h = temporal_attention(
        _norm(x, params, f"{prefix}.norm2"), omega, config.encoder_causal, params, f"{prefix}.temporal", heads
    )
    x = ops.add(x, nn.dropout(h, config.dropout, rng))
    h = nn.feed_forward(_norm(x, params, f"{prefix}.norm3"), params, f"{prefix}.ff")
    return ops.add(x, nn.dropout(h, config.dropout, rng))


def decoder_block(
    dec_tokens: Tensor,
    enc_tokens: Tensor,
    omega: Optional[TimeScaleMatrix],
    config: ModelConfig,
    params,
    prefix: str,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Causal ω-scaled self-attention, cross-attention to the encoder, feed-forward."""
    heads = config.num_heads
    y = dec_tokens
    h = sequence_attention(_norm(y, params, f"{prefix}.norm1"), omega, True, params, f"{prefix}.self_attn", heads)
    y = ops.add(y, nn.dropout(h, config.dropout, rng))
    h = cross_attention(_norm(y, params, f"{prefix}.norm2"), enc_tokens, params, f"{prefix}.cross_attn", heads)
    y = ops.add(y, nn.dropout(h, config.dropout, rng))
    h = nn.feed_forward(_norm(y, params, f"{prefix}.norm3"), params, f"{prefix}.ff")
    return ops.add(y, nn.dropout(h, config.dropout, rng))


def _check_batch(batch: ClipBatch, config: ModelConfig) -> None:
    _, _, height, width, channels = batch.images.shape
    if (height, width, channels) != (config.image_size, config.image_size, config.channels):
        raise ConfigurationError(
            f"images are {height}x{width}x{channels}, model expects "
            f"{config.image_size}x{config.image_size}x{config.channels}"
        )


def forward(
    batch: ClipBatch,
    config: ModelConfig,
    params,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Logits [B, L, k]; position i forecasts the label of visit i + 1.

    ``rng`` switches dropout on; leave it out for evaluation.
    """
    _check_batch(batch, config)
    d = config.d_model
    grid = patch_embed(batch.images, config.patch_size, d, params["patch_embed.weight"], params["patch_embed.bias"])
    if config.use_stp:
        grid = TokenGrid(
            ops.add(grid.tokens, stp_encode(batch.timestamps, grid.num_tokens, d)), grid.grid_h, grid.grid_w
        )
    omega = time_scale_matrix(batch.timestamps, config.alpha, config.beta) if config.use_tta else None

    dec = ops.add(
        label_embed(batch.input_labels, config.num_classes, d, params["label_embed.table"]),
        time_encode(batch.timestamps, d),
    )
    aggregate: Optional[Tensor] = None
    for s in range(1, config.num_scales + 1):
        scale = f"scale{s}"
        if s > 1:
            grid = scale_transition(grid, config.gamma, params[f"{scale}.merge.weight"], params[f"{scale}.merge.bias"])
        enc = grid.tokens
        for b in range(1, config.blocks_per_scale + 1):
            enc = encoder_block(enc, omega, config, params, f"{scale}.enc{b}", rng)
        for b in range(1, config.blocks_per_scale + 1):
            dec = decoder_block(dec, enc, omega, config, params, f"{scale}.dec{b}", rng)
        aggregate = dec if aggregate is None else ops.add(aggregate, dec)
        grid = TokenGrid(enc, grid.grid_h, grid.grid_w)
    return nn.linear(aggregate, params["head.weight"], params["head.bias"])


def predict_next(batch: ClipBatch, config: ModelConfig, params) -> np.ndarray:
    """[B, k] class probabilities for the visit after the last one in each clip."""
    with no_grad():
        logits = forward(batch, config, params)
        probs = ops.softmax(ops.index(logits, (slice(None), -1)), axis=-1)
    return np.array(probs.data)


@dataclass
class MSTFormer:
    """A config paired with its parameters."""

    config: ModelConfig
    params: ModelParams

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int = 0) -> "MSTFormer":
        params = ModelParams.initialize(config, seed)
        logger.info(f"🧠 Initialised model with {params.num_parameters:,} parameters (seed={seed})")
        return cls(config, params)

    @classmethod
    def from_tensors(cls, config: ModelConfig, tensors) -> "MSTFormer":
        params = ModelParams(tensors)
        params.check_against(config)
        return cls(config, params)

    def __call__(self, batch: ClipBatch, rng: Optional[np.random.Generator] = None) -> Tensor:
        return forward(batch, self.config, self.params, rng)

    def predict_next(self, batch: ClipBatch) -> np.ndarray:
        return predict_next(batch, self.config, self.params)
