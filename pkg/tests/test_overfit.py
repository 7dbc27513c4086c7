"""Long-running training checks on the default architecture."""
import numpy as np
import pytest

from mstformer.schemas.config import GenConfig, ModelConfig, TrainConfig
from mstformer.services.clips import clips_for, final_targets
from mstformer.services.data_synth import generate
from mstformer.services.trainer import evaluate_clips, fit


def balanced_clips(count=32, seed=0):
    samples = generate(GenConfig(num_sequences=48, variant_fraction=0.5, seed=seed))
    clips, _ = clips_for(samples)
    targets = final_targets(clips)
    positives = [c for c, t in zip(clips, targets) if t == 1][: count // 2]
    negatives = [c for c, t in zip(clips, targets) if t == 0][: count // 2]
    assert len(positives) == len(negatives) == count // 2
    return positives + negatives


@pytest.mark.slow
def test_default_model_overfits_small_balanced_set():
    clips = balanced_clips()
    result = fit(
        ModelConfig(),
        TrainConfig(lr_base=0.01, batch_size=4, epochs=25, max_steps=200, seed=0, loss="balanced", tau=2.0),
        clips,
    )
    assert result.total_steps == 200
    assert np.mean([r.loss for r in result.loss_log[-8:]]) < np.mean([r.loss for r in result.loss_log[:8]])
    report = evaluate_clips(result.model, clips, split="train")
    assert report.auc >= 0.99
