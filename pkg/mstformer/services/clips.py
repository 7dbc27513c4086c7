"""Sliding-window clips over sequences and their collation into model batches."""
import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from mstformer.exceptions import ContractError, DatasetError
from mstformer.models.embedding import ClipBatch
from mstformer.services.data_synth import SequenceSample
from mstformer.services.losses import ClassCounts

logger = logging.getLogger(__name__)


@dataclass
class Clip:
    """``length`` consecutive visits: all but the last are model input, the last is the forecast target."""

    images: np.ndarray  # [length, H, W, C]
    timestamps: np.ndarray  # [length]
    labels: np.ndarray  # [length]
    sequence_index: int = -1
    start: int = 0

    @property
    def num_inputs(self) -> int:
        return len(self.labels) - 1

    @property
    def input_labels(self) -> np.ndarray:
        return self.labels[:-1]

    @property
    def target_labels(self) -> np.ndarray:
        """Next-visit label for every input position."""
        return self.labels[1:]

    @property
    def final_target(self) -> int:
        return int(self.labels[-1])


def extract_clips(
    seq: SequenceSample,
    length: int = 6,
    stride: int = 1,
    sequence_index: int = -1,
) -> List[Clip]:
    """Windows [i, i + length) for i = 0, stride, ...; empty when the sequence is too short."""
    if length < 2 or stride < 1:
        raise ContractError(f"clip length must be >= 2 and stride >= 1, got {length}/{stride}")
    clips = []
    for start in range(0, seq.length - length + 1, stride):
        window = slice(start, start + length)
        clips.append(
            Clip(
                images=seq.images[window],
                timestamps=np.asarray(seq.timestamps[window], dtype=np.float64),
                labels=np.asarray(seq.labels[window], dtype=np.int64),
                sequence_index=sequence_index,
                start=start,
            )
        )
    return clips


def clips_for(
    samples: Sequence[SequenceSample],
    indices: Optional[Iterable[int]] = None,
    length: int = 6,
    stride: int = 1,
) -> Tuple[List[Clip], int]:
    """Clips from the selected sequences plus the number of sequences skipped as too short."""
    selected = range(len(samples)) if indices is None else list(indices)
    clips: List[Clip] = []
    skipped = 0
    for i in selected:
        if not 0 <= i < len(samples):
            raise DatasetError(f"sequence index {i} outside dataset of {len(samples)}")
        found = extract_clips(samples[i], length, stride, sequence_index=i)
        if not found:
            skipped += 1
        clips.extend(found)
    if skipped:
        logger.warning(f"⚠️ Skipped {skipped} sequences shorter than {length} visits")
    return clips, skipped


def collate(clips: Sequence[Clip]) -> ClipBatch:
    """Stack clips into a ClipBatch of their input visits and next-visit targets."""
    if not clips:
        raise ContractError("cannot collate an empty list of clips")
    return ClipBatch(
        images=np.stack([c.images[:-1] for c in clips]),
        timestamps=np.stack([c.timestamps[:-1] for c in clips]),
        input_labels=np.stack([c.input_labels for c in clips]),
        target_labels=np.stack([c.target_labels for c in clips]),
    )


def final_targets(clips: Sequence[Clip]) -> np.ndarray:
    return np.array([c.final_target for c in clips], dtype=np.int64)


def class_counts(clips: Sequence[Clip], num_classes: int, tau: float) -> ClassCounts:
    """Frequencies of the final forecast targets across ``clips``."""
    return ClassCounts.from_labels(final_targets(clips), num_classes, tau)
