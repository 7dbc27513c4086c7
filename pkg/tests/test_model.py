"""Tests for the multi-scale encoder-decoder."""
import numpy as np
import pytest
from pydantic import ValidationError

from mstformer.core import nn
from mstformer.core.tensor import Tensor
from mstformer.exceptions import ConfigurationError
from mstformer.models import MSTFormer, param_count, parameter_shapes
from mstformer.models.embedding import ClipBatch, TokenGrid
from mstformer.models.mst_former import encoder_block, forward, predict_next, scale_transition
from mstformer.schemas.config import ModelConfig
from tests.conftest import make_batch

DEFAULT_PARAM_COUNT = 988514


def test_default_parameter_count():
    config = ModelConfig()
    assert param_count(config) == DEFAULT_PARAM_COUNT
    assert sum(int(np.prod(s)) for s in parameter_shapes(config).values()) == DEFAULT_PARAM_COUNT


def test_token_counts_shrink_by_gamma_squared():
    config = ModelConfig()
    assert [config.tokens_at(s) for s in (1, 2, 3)] == [64, 16, 4]


def test_invalid_configs_rejected():
    with pytest.raises(ValidationError):
        ModelConfig(d_model=96, num_heads=5)
    with pytest.raises(ValidationError):
        ModelConfig(image_size=64, patch_size=8, num_scales=5)


def test_scale_transition_merges_neighbourhoods(rng):
    tokens = Tensor(rng.normal(size=(1, 2, 64, 4)))
    weight = Tensor(rng.normal(size=(16, 4)))
    merged = scale_transition(TokenGrid(tokens, 8, 8), 2, weight, Tensor(np.zeros(4)))
    assert (merged.grid_h, merged.grid_w, merged.num_tokens) == (4, 4, 16)
    assert merged.tokens.shape == (1, 2, 16, 4)


def test_scale_transition_identity_when_gamma_is_one(rng):
    tokens = Tensor(rng.normal(size=(2, 3, 9, 5)))
    out = scale_transition(TokenGrid(tokens, 3, 3), 1, Tensor(np.eye(5)), Tensor(np.zeros(5)))
    assert np.allclose(out.tokens.data, tokens.data, atol=1e-15)


def test_scale_transition_keeps_constant_field_constant(rng):
    constant = np.tile(rng.normal(size=6), (1, 1, 16, 1))
    out = scale_transition(
        TokenGrid(Tensor(constant), 4, 4), 2, Tensor(rng.normal(size=(24, 6))), Tensor(rng.normal(size=6))
    ).tokens.data
    assert np.allclose(out, out[:, :, :1], atol=1e-12)


def test_scale_transition_rejects_indivisible_grid(rng):
    with pytest.raises(ConfigurationError):
        scale_transition(TokenGrid(Tensor(np.zeros((1, 1, 9, 4))), 3, 3), 2, Tensor(np.zeros((16, 4))), Tensor(np.zeros(4)))


def test_encoder_block_with_zero_attention_is_feed_forward_residual(tiny_config, tiny_params, rng):
    """Test that zeroed attention output projections leave only the FF residual path."""
    prefix = "scale1.enc1"
    for part in ("spatial", "temporal"):
        for leaf in ("weight", "bias"):
            name = f"{prefix}.{part}.o.{leaf}"
            tiny_params.assign(name, np.zeros(tiny_params[name].shape))
    x = Tensor(rng.normal(size=(2, 3, 4, tiny_config.d_model)))
    out = encoder_block(x, None, tiny_config, tiny_params, prefix).data
    normed = nn.layer_norm(x, tiny_params[f"{prefix}.norm3.gamma"], tiny_params[f"{prefix}.norm3.beta"])
    expected = x.data + nn.feed_forward(normed, tiny_params, f"{prefix}.ff").data
    assert np.allclose(out, expected, atol=1e-12)


def test_forward_shape(tiny_config, tiny_params, tiny_batch):
    logits = forward(tiny_batch, tiny_config, tiny_params)
    assert logits.shape == (2, 5, tiny_config.num_classes)
    assert np.all(np.isfinite(logits.data))


def test_single_scale_model(rng):
    config = ModelConfig(image_size=16, num_scales=1, patch_size=8, d_model=8, num_heads=2, blocks_per_scale=3)
    model = MSTFormer.initialize(config, seed=1)
    assert not any(name.startswith("scale2") for name in model.params)
    assert model(make_batch(config, rng, batch=1, length=3)).shape == (1, 3, 2)


def test_global_time_shift_leaves_logits_unchanged(tiny_config, tiny_params, tiny_batch):
    shifted = ClipBatch(
        tiny_batch.images, tiny_batch.timestamps + 37.5, tiny_batch.input_labels, tiny_batch.target_labels
    )
    before = forward(tiny_batch, tiny_config, tiny_params).data
    after = forward(shifted, tiny_config, tiny_params).data
    assert np.allclose(before, after, atol=1e-9, rtol=0)


@pytest.mark.parametrize("cut", [0, 1, 2, 3])
def test_future_labels_do_not_reach_earlier_positions(tiny_config, tiny_params, tiny_batch, cut):
    labels = tiny_batch.input_labels.copy()
    labels[:, cut + 1:] = 1 - labels[:, cut + 1:]
    flipped = ClipBatch(tiny_batch.images, tiny_batch.timestamps, labels, tiny_batch.target_labels)
    before = forward(tiny_batch, tiny_config, tiny_params).data
    after = forward(flipped, tiny_config, tiny_params).data
    assert np.array_equal(before[:, : cut + 1], after[:, : cut + 1])
    assert not np.allclose(before[:, cut + 1:], after[:, cut + 1:])


def _replace_images_from(batch, cut, rng):
    images = batch.images.copy()
    images[:, cut + 1:] = rng.uniform(0.0, 1.0, size=images[:, cut + 1:].shape)
    return ClipBatch(images, batch.timestamps, batch.input_labels, batch.target_labels)


@pytest.mark.parametrize("cut", [0, 1, 2, 3])
def test_causal_encoder_hides_future_images(tiny_config, tiny_params, tiny_batch, rng, cut):
    """Test that with a causal encoder, later images cannot move earlier logits."""
    config = tiny_config.model_copy(update={"encoder_causal": True})
    before = forward(tiny_batch, config, tiny_params).data
    after = forward(_replace_images_from(tiny_batch, cut, rng), config, tiny_params).data
    assert np.array_equal(before[:, : cut + 1], after[:, : cut + 1])
    assert not np.allclose(before[:, cut + 1:], after[:, cut + 1:])


def test_default_encoder_lets_next_image_reach_earlier_positions(tiny_config, tiny_params, tiny_batch, rng):
    """Test the non-causal encoder: visit i + 1's image reaches position i.

    Only the final position is free of this, which is why evaluation scores it alone.
    """
    assert tiny_config.encoder_causal is False
    before = forward(tiny_batch, tiny_config, tiny_params).data
    after = forward(_replace_images_from(tiny_batch, 2, rng), tiny_config, tiny_params).data
    assert not np.allclose(before[:, 2], after[:, 2])


def test_dropout_layer(rng):
    x = Tensor(rng.normal(size=(4, 50)))
    assert nn.dropout(x, 0.5, None) is x
    assert nn.dropout(x, 0.0, rng) is x
    dropped = nn.dropout(x, 0.5, np.random.default_rng(9)).data
    kept = dropped != 0.0
    assert 0 < kept.sum() < x.size
    assert np.allclose(dropped[kept], 2.0 * x.data[kept])
    assert np.array_equal(nn.dropout(x, 0.5, np.random.default_rng(9)).data, dropped)


def test_dropout_only_acts_when_given_a_generator(tiny_config, tiny_params, tiny_batch):
    """Test that dropout is off at evaluation and seeded during training."""
    noisy = tiny_config.model_copy(update={"dropout": 0.3})
    plain = forward(tiny_batch, tiny_config, tiny_params).data
    assert np.array_equal(forward(tiny_batch, noisy, tiny_params).data, plain)
    first = forward(tiny_batch, noisy, tiny_params, np.random.default_rng(5)).data
    again = forward(tiny_batch, noisy, tiny_params, np.random.default_rng(5)).data
    other = forward(tiny_batch, noisy, tiny_params, np.random.default_rng(6)).data
    assert not np.allclose(first, plain)
    assert np.array_equal(first, again)
    assert not np.allclose(first, other)


def test_stp_and_tta_switches_change_output(tiny_config, tiny_params, tiny_batch):
    full = forward(tiny_batch, tiny_config, tiny_params).data
    for switch in ("use_stp", "use_tta"):
        ablated = tiny_config.model_copy(update={switch: False})
        assert not np.allclose(forward(tiny_batch, ablated, tiny_params).data, full)


def test_predict_next_returns_distributions(tiny_config, tiny_params, tiny_batch):
    probs = predict_next(tiny_batch, tiny_config, tiny_params)
    assert probs.shape == (2, 2)
    assert np.allclose(probs.sum(axis=1), 1.0)


def test_zero_head_predicts_uniform(tiny_config, tiny_params, tiny_batch):
    tiny_params.assign("head.weight", np.zeros(tiny_params["head.weight"].shape))
    assert np.allclose(predict_next(tiny_batch, tiny_config, tiny_params), 0.5, atol=1e-15)


def test_batch_must_match_image_config(tiny_config, tiny_params, rng):
    other = ModelConfig(image_size=32, patch_size=8, num_scales=2, d_model=8, num_heads=2)
    with pytest.raises(ConfigurationError):
        forward(make_batch(other, rng, batch=1, length=2), tiny_config, tiny_params)


def test_initialize_is_deterministic(tiny_config):
    first = MSTFormer.initialize(tiny_config, seed=5).params
    second = MSTFormer.initialize(tiny_config, seed=5).params
    assert all(np.array_equal(first[name].data, second[name].data) for name in first)
