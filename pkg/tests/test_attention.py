"""Tests for the ω matrix, masks and the attention kernels."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mstformer.core.tensor import Tensor
from mstformer.exceptions import ConfigurationError, ContractError
from mstformer.models.attention import (
    TimeScaleMatrix,
    attention_weights,
    causal_mask,
    cross_attention,
    dot_product_attention,
    merge_heads,
    multi_head,
    sequence_attention,
    spatial_attention,
    split_heads,
    temporal_attention,
    time_aware_attention,
    time_scale_matrix,
    visit_mask,
)
from mstformer.models.params import _attention_shapes


def _attention_params(prefix, width, seed=0):
    rng = np.random.default_rng(seed)
    return {name: Tensor(rng.normal(0.0, 0.5, size=shape)) for name, shape in _attention_shapes(prefix, width).items()}


def _reference_attention(q, k, v):
    scores = q @ np.swapaxes(k, -1, -2) / np.sqrt(q.shape[-1])
    scores = scores - scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=-1, keepdims=True)
    return weights @ v


def test_omega_spot_values():
    omega = time_scale_matrix(np.array([0.0, 1.0]), alpha=0.5, beta=0.5).omega
    assert omega[0, 1] == pytest.approx(0.5, abs=1e-9)
    assert omega[0, 0] == pytest.approx(0.62246, abs=1e-5)
    assert omega[0, 0] == pytest.approx(1.0 / (1.0 + np.exp(-0.5)), abs=1e-9)


@given(st.lists(st.floats(0.0, 20.0), min_size=2, max_size=8, unique=True))
def test_omega_symmetric_and_in_unit_interval(times):
    omega = time_scale_matrix(np.sort(times), 0.5, 0.5).omega
    assert np.array_equal(omega, omega.T)
    assert np.all(omega > 0) and np.all(omega < 1)


def test_omega_decreases_with_gap():
    gaps = np.array([0.0, 0.5, 1.0, 3.0, 10.0, 40.0])
    omega = time_scale_matrix(gaps, 0.5, 0.5).omega[0]
    assert np.all(np.diff(omega) < 0)


def test_omega_shift_invariant():
    times = np.array([0.3, 1.1, 2.7, 5.0])
    assert np.allclose(time_scale_matrix(times, 0.5, 0.5).omega, time_scale_matrix(times + 17.0, 0.5, 0.5).omega)


def test_negative_alpha_rejected():
    with pytest.raises(ConfigurationError):
        time_scale_matrix(np.array([0.0, 1.0]), alpha=-0.1, beta=0.5)


def test_masks():
    assert causal_mask(3).tolist() == [[False, True, True], [False, False, True], [False, False, False]]
    mask = visit_mask(3, 2)
    assert mask.shape == (3, 6)
    assert mask[0].tolist() == [False, False, True, True, True, True]
    assert not mask[2].any()


def test_single_position_returns_values():
    rng = np.random.default_rng(0)
    q, k, v = (Tensor(rng.normal(size=(2, 1, 4))) for _ in range(3))
    assert np.array_equal(dot_product_attention(q, k, v).data, v.data)


def test_weights_rows_sum_to_one():
    rng = np.random.default_rng(1)
    q, k = Tensor(rng.normal(size=(3, 5, 4))), Tensor(rng.normal(size=(3, 5, 4)))
    omega = time_scale_matrix(np.cumsum(rng.uniform(0.1, 2.0, size=5)), 0.5, 0.5).omega
    weights = attention_weights(q, k, omega=omega, mask=causal_mask(5)).data
    assert np.allclose(weights.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(weights[:, np.triu_indices(5, k=1)[0], np.triu_indices(5, k=1)[1]] == 0)


def test_unit_omega_equals_vanilla_attention():
    """Test that ω of all ones reproduces plain scaled dot-product attention."""
    rng = np.random.default_rng(2)
    q, k, v = (rng.normal(size=(4, 6, 8)) for _ in range(3))
    scaled = time_aware_attention(Tensor(q), Tensor(k), Tensor(v), TimeScaleMatrix.ones(4, 6).omega).data
    assert np.allclose(scaled, _reference_attention(q, k, v), atol=1e-12, rtol=0)


def test_temporal_attention_with_unit_omega_matches_plain_path():
    rng = np.random.default_rng(3)
    tokens = Tensor(rng.normal(size=(2, 4, 3, 8)))
    params = _attention_params("t", 8)
    plain = temporal_attention(tokens, None, False, params, "t", 2).data
    unit = temporal_attention(tokens, TimeScaleMatrix.ones(2, 4), False, params, "t", 2).data
    assert np.allclose(plain, unit, atol=1e-12, rtol=0)


def test_omega_shape_mismatch_is_contract_error():
    rng = np.random.default_rng(4)
    q, k, v = (Tensor(rng.normal(size=(1, 3, 4))) for _ in range(3))
    with pytest.raises(ContractError):
        time_aware_attention(q, k, v, np.ones((1, 4, 4)))
    with pytest.raises(ContractError):
        temporal_attention(Tensor(np.zeros((1, 3, 2, 4))), TimeScaleMatrix.ones(1, 5), False, _attention_params("t", 4), "t", 2)


def test_spatial_attention_is_permutation_equivariant():
    """Test that shuffling patch order shuffles the output the same way."""
    rng = np.random.default_rng(5)
    tokens = rng.normal(size=(1, 2, 6, 8))
    params = _attention_params("s", 8)
    perm = rng.permutation(6)
    out = spatial_attention(Tensor(tokens), params, "s", 2).data
    shuffled = spatial_attention(Tensor(tokens[:, :, perm]), params, "s", 2).data
    assert np.allclose(shuffled, out[:, :, perm], atol=1e-12)


@pytest.mark.parametrize("trial", range(20))
def test_causal_temporal_attention_ignores_future(trial):
    rng = np.random.default_rng(100 + trial)
    length = 5
    tokens = rng.normal(size=(2, length, 3, 8))
    omega = time_scale_matrix(np.cumsum(rng.uniform(0.1, 3.0, size=(2, length)), axis=1), 0.5, 0.5)
    params = _attention_params("t", 8, seed=trial)
    cut = int(rng.integers(0, length - 1))
    perturbed = tokens.copy()
    perturbed[:, cut + 1:] = rng.normal(size=perturbed[:, cut + 1:].shape) * 10.0
    before = temporal_attention(Tensor(tokens), omega, True, params, "t", 2).data
    after = temporal_attention(Tensor(perturbed), omega, True, params, "t", 2).data
    assert np.array_equal(before[:, : cut + 1], after[:, : cut + 1])


@pytest.mark.parametrize("trial", range(20))
def test_causal_sequence_attention_ignores_future(trial):
    rng = np.random.default_rng(200 + trial)
    length = 6
    x = rng.normal(size=(2, length, 8))
    omega = time_scale_matrix(np.cumsum(rng.uniform(0.1, 3.0, size=(2, length)), axis=1), 0.5, 0.5)
    params = _attention_params("d", 8, seed=trial)
    cut = int(rng.integers(0, length - 1))
    perturbed = x.copy()
    perturbed[:, cut + 1:] = rng.normal(size=perturbed[:, cut + 1:].shape) * 10.0
    before = sequence_attention(Tensor(x), omega, True, params, "d", 2).data
    after = sequence_attention(Tensor(perturbed), omega, True, params, "d", 2).data
    assert np.array_equal(before[:, : cut + 1], after[:, : cut + 1])
    assert not np.allclose(before[:, cut + 1:], after[:, cut + 1:])


def test_non_causal_sequence_attention_sees_future():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(1, 4, 8))
    params = _attention_params("d", 8)
    perturbed = x.copy()
    perturbed[:, 3] += 5.0
    before = sequence_attention(Tensor(x), None, False, params, "d", 2).data
    after = sequence_attention(Tensor(perturbed), None, False, params, "d", 2).data
    assert not np.allclose(before[:, 0], after[:, 0])


@pytest.mark.parametrize("trial", range(20))
def test_cross_attention_sees_only_past_visits(trial):
    rng = np.random.default_rng(300 + trial)
    length, count = 5, 4
    dec = rng.normal(size=(2, length, 8))
    enc = rng.normal(size=(2, length, count, 8))
    params = _attention_params("x", 8, seed=trial)
    cut = int(rng.integers(0, length - 1))
    changed = enc.copy()
    changed[:, cut + 1:] = rng.normal(size=changed[:, cut + 1:].shape) * 10.0
    before = cross_attention(Tensor(dec), Tensor(enc), params, "x", 2).data
    after = cross_attention(Tensor(dec), Tensor(changed), params, "x", 2).data
    assert np.array_equal(before[:, : cut + 1], after[:, : cut + 1])
    assert not np.allclose(before[:, cut + 1:], after[:, cut + 1:])


def test_cross_attention_shape_mismatch():
    with pytest.raises(ContractError):
        cross_attention(Tensor(np.zeros((1, 3, 8))), Tensor(np.zeros((1, 4, 2, 8))), _attention_params("x", 8), "x", 2)


def test_head_split_and_merge_shapes():
    x = Tensor(np.arange(2 * 5 * 8, dtype=float).reshape(2, 5, 8))
    heads = split_heads(x, 4)
    assert heads.shape == (2, 4, 5, 2)
    assert np.array_equal(merge_heads(heads).data, x.data)


def test_indivisible_heads_rejected():
    x = Tensor(np.zeros((1, 3, 6)))
    with pytest.raises(ConfigurationError):
        multi_head(dot_product_attention, x, x, 4, _attention_params("m", 6), "m")
