"""Tests for the synthetic generator, clips, splits and the MSTD container."""
import numpy as np
import pytest

from mstformer.config import build_experiment_config
from mstformer.exceptions import ConfigurationError, DataFormatError, DatasetError
from mstformer.schemas.config import GenConfig
from mstformer.services.clips import class_counts, clips_for, collate, extract_clips, final_targets
from mstformer.services.data_synth import (
    SequenceSample,
    _variant_flags,
    assign_splits,
    generate,
    generate_sequence,
    read_manifest,
    write_manifest,
)
from mstformer.services.dataset_io import HEADER, decode_dataset, encode_dataset, load_dataset, save_dataset


def _toy_sequence(length, variant=False, flip=None):
    labels = np.zeros(length, dtype=np.int64)
    if flip is not None:
        labels[flip:] = 1
    return SequenceSample(
        timestamps=np.cumsum(np.full(length, 0.5)),
        images=np.arange(length * 8 * 8 * 3, dtype=np.float32).reshape(length, 8, 8, 3) / 1e4,
        labels=labels,
        variant=variant,
    )


def _same_samples(a, b):
    return len(a) == len(b) and all(
        np.array_equal(x.timestamps, y.timestamps)
        and np.array_equal(x.images, y.images)
        and np.array_equal(x.labels, y.labels)
        and x.variant == y.variant
        for x, y in zip(a, b)
    )


def test_same_seed_same_dataset(small_gen_config):
    assert _same_samples(generate(small_gen_config), generate(small_gen_config))


def test_worker_count_does_not_change_output(small_gen_config):
    parallel = small_gen_config.model_copy(update={"workers": 4})
    assert _same_samples(generate(small_gen_config), generate(parallel))


def test_different_seed_different_dataset(small_gen_config):
    other = small_gen_config.model_copy(update={"seed": 4})
    assert not _same_samples(generate(small_gen_config), generate(other))


def test_generated_sequences_are_well_formed(small_gen_config):
    for sample in generate(small_gen_config):
        assert small_gen_config.min_length <= sample.length <= small_gen_config.max_length
        assert np.all(np.diff(sample.timestamps) > 0)
        assert np.all(np.diff(sample.labels) >= 0)
        assert sample.images.shape == (sample.length, 16, 16, 3)
        assert sample.images.min() >= 0.0 and sample.images.max() <= 1.0
        assert np.all(sample.cup_disc[sample.labels == 1] > small_gen_config.cdr_threshold)
        assert sample.variant == bool(sample.labels[-1])
        if sample.variant:
            assert sample.labels[0] == 0


def test_no_variants_means_all_negative(small_gen_config):
    config = small_gen_config.model_copy(update={"variant_fraction": 0.0})
    assert all(not s.labels.any() for s in generate(config))


def test_default_variant_count():
    config = GenConfig()
    flags = _variant_flags(config, np.random.SeedSequence(config.seed).spawn(1)[0])
    assert int(flags.sum()) == 37


def test_default_clip_level_imbalance():
    """Test that the default proportions give a few percent positive forecast targets."""
    config = GenConfig(image_size=8)
    clips, skipped = clips_for(generate(config))
    assert skipped == 0
    positive = final_targets(clips).mean()
    assert 0.03 <= positive <= 0.08


def _first_positive_visits(config):
    return [(s.length, int(np.argmax(s.labels))) for s in generate(config) if s.variant]


def test_flip_visit_stays_in_window(small_gen_config):
    """Test that variant labels flip within the last flip_window visits."""
    config = GenConfig(**{**small_gen_config.model_dump(), "num_sequences": 40})
    flips = _first_positive_visits(config)
    assert flips
    assert all(length - 3 <= first <= length - 1 for length, first in flips)


def test_wide_flip_window_reaches_early_visits(small_gen_config):
    config = GenConfig(**{**small_gen_config.model_dump(), "num_sequences": 40, "flip_window": 28})
    flips = _first_positive_visits(config)
    assert all(1 <= first <= length - 1 for length, first in flips)
    assert any(length - first > 3 for length, first in flips)


def test_three_stage_labels():
    config = GenConfig(
        num_sequences=20, image_size=8, num_stages=3, variant_fraction=1.0, train_fraction=0.5, val_fraction=0.25
    )
    samples = generate(config)
    seen = set()
    for sample in samples:
        assert np.all(np.diff(sample.labels) >= 0)
        assert set(sample.labels.tolist()) <= {0, 1, 2}
        assert np.all(sample.cup_disc[sample.labels == 2] > config.advanced_threshold)
        seen.update(sample.labels.tolist())
    assert seen == {0, 1, 2}


def test_sequence_generation_depends_only_on_its_seed(small_gen_config):
    seed = np.random.SeedSequence(99)
    first = generate_sequence(small_gen_config, True, seed)
    second = generate_sequence(small_gen_config, True, seed)
    assert np.array_equal(first.images, second.images)


def test_short_min_length_is_configuration_error():
    with pytest.raises(ConfigurationError):
        build_experiment_config({"min_length": "5", "clip_length": "6"})


@pytest.mark.parametrize("length, expected", [(6, 1), (9, 4), (5, 0)])
def test_clip_counts(length, expected):
    assert len(extract_clips(_toy_sequence(length))) == expected


def test_clip_layout():
    clip = extract_clips(_toy_sequence(7, variant=True, flip=5))[1]
    assert clip.start == 1
    assert clip.input_labels.tolist() == [0, 0, 0, 0, 1]
    assert clip.target_labels.tolist() == [0, 0, 0, 1, 1]
    assert clip.final_target == 1


def test_clips_never_cross_sequences():
    samples = [_toy_sequence(7), _toy_sequence(4), _toy_sequence(6)]
    clips, skipped = clips_for(samples)
    assert skipped == 1
    assert [(c.sequence_index, c.start) for c in clips] == [(0, 0), (0, 1), (2, 0)]
    for clip in clips:
        source = samples[clip.sequence_index].timestamps[clip.start: clip.start + 6]
        assert np.array_equal(clip.timestamps, source)


def test_collate_drops_final_visit():
    clips, _ = clips_for([_toy_sequence(8, variant=True, flip=6)])
    batch = collate(clips)
    assert batch.images.shape == (3, 5, 8, 8, 3)
    assert batch.target_labels[-1].tolist() == [0, 0, 0, 1, 1]
    counts = class_counts(clips, num_classes=2, tau=1.0)
    assert counts.counts == [1, 2]


def test_clips_for_rejects_unknown_index():
    with pytest.raises(DatasetError):
        clips_for([_toy_sequence(6)], indices=[3])


def test_default_split_sizes():
    flags = _variant_flags(GenConfig(), np.random.SeedSequence(0).spawn(1)[0])
    samples = [SequenceSample(np.zeros(1), np.zeros((1, 1, 1, 1)), np.zeros(1), bool(f)) for f in flags]
    splits = assign_splits(samples, GenConfig())
    assert [splits.count(name) for name in ("train", "val", "test")] == [300, 35, 70]
    variants_per_split = {name: sum(1 for s, f in zip(splits, flags) if s == name and f) for name in ("train", "val", "test")}
    assert all(count > 0 for count in variants_per_split.values())


def test_manifest_round_trip(tmp_path, small_gen_config):
    samples = generate(small_gen_config)
    splits = assign_splits(samples, small_gen_config)
    members = read_manifest(write_manifest(splits, tmp_path / "splits.tsv"))
    assert sorted(sum(members.values(), [])) == list(range(len(samples)))
    for name, indices in members.items():
        assert all(splits[i] == name for i in indices)


def test_bad_manifest(tmp_path):
    path = tmp_path / "splits.tsv"
    path.write_text("0\ttrain\n1\tholdout\n")
    with pytest.raises(DatasetError, match=":2:"):
        read_manifest(path)
    with pytest.raises(DatasetError):
        read_manifest(tmp_path / "missing.tsv")


def test_empty_container_is_header_only():
    payload = encode_dataset([])
    assert len(payload) == HEADER.size == 24
    assert decode_dataset(payload) == []


def test_container_round_trip(tmp_path, small_gen_config):
    samples = generate(small_gen_config)
    loaded = load_dataset(save_dataset(samples, tmp_path / "data" / "dataset.mstd"))
    assert _same_samples(samples, loaded)


def test_container_per_sequence_layout():
    payload = encode_dataset([_toy_sequence(6)])
    assert len(payload) == 24 + 4 + 1 + 8 * 6 + 6 + 4 * 6 * 8 * 8 * 3


@pytest.mark.parametrize("cut", [10, 24, 27, 60, -3])
def test_truncated_container_returns_nothing(cut):
    payload = encode_dataset([_toy_sequence(6), _toy_sequence(7)])
    with pytest.raises(DataFormatError, match="truncated") as excinfo:
        decode_dataset(payload[:cut])
    assert excinfo.value.offset <= len(payload[:cut])


def test_bad_container_header():
    payload = bytearray(encode_dataset([_toy_sequence(6)]))
    with pytest.raises(DataFormatError) as excinfo:
        decode_dataset(b"NOPE" + bytes(payload[4:]))
    assert excinfo.value.offset == 0
    payload[4] = 2
    with pytest.raises(DataFormatError) as excinfo:
        decode_dataset(bytes(payload))
    assert excinfo.value.offset == 4


def test_missing_dataset_file(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "nope.mstd")
