"""Pytest configuration and fixtures."""
import numpy as np
import pytest
from hypothesis import settings

from mstformer.models.embedding import ClipBatch
from mstformer.models.params import ModelParams
from mstformer.schemas.config import GenConfig, ModelConfig

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    """Seeded generator so every test is reproducible."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """16×16 images, two scales, d_m=8, two heads."""
    return ModelConfig(image_size=16, channels=3, num_scales=2, gamma=2, patch_size=8, d_model=8, num_heads=2)


@pytest.fixture
def tiny_params(tiny_config):
    return ModelParams.initialize(tiny_config, seed=0)


def make_batch(config: ModelConfig, rng: np.random.Generator, batch: int = 2, length: int = 5) -> ClipBatch:
    gaps = rng.uniform(0.25, 4.0, size=(batch, length))
    labels = np.sort(rng.integers(0, config.num_classes, size=(batch, length + 1)), axis=1)
    return ClipBatch(
        images=rng.uniform(0.0, 1.0, size=(batch, length, config.image_size, config.image_size, config.channels)),
        timestamps=1.0 + np.cumsum(gaps, axis=1),
        input_labels=labels[:, :-1],
        target_labels=labels[:, 1:],
    )


@pytest.fixture
def tiny_batch(tiny_config, rng):
    return make_batch(tiny_config, rng)


@pytest.fixture
def small_gen_config():
    """A dozen short 16×16 sequences, half of them converting."""
    return GenConfig(
        num_sequences=12,
        min_length=6,
        max_length=10,
        image_size=16,
        variant_fraction=0.5,
        train_fraction=0.5,
        val_fraction=0.25,
        seed=3,
    )
