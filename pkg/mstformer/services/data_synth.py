"""Procedural longitudinal fundus-like sequences with irregular visit times."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.special import expit

from mstformer.exceptions import DatasetError
from mstformer.schemas.config import GenConfig

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
RATIO_FLOOR = 0.2
RATIO_CEILING = 0.95
# Non-variant eyes stay at least this far below the disease threshold.
STABLE_MARGIN = 0.05
EDGE_SOFTNESS = 0.8


@dataclass
class SequenceSample:
    """One eye followed over L visits."""

    timestamps: np.ndarray  # [L] years
    images: np.ndarray  # [L, H, W, C] float32 in [0, 1]
    labels: np.ndarray  # [L], non-decreasing
    variant: bool
    cup_disc: Optional[np.ndarray] = None  # [L]; not persisted

    @property
    def length(self) -> int:
        return len(self.timestamps)


@dataclass(frozen=True)
class _EyeGeometry:
    center_y: float
    center_x: float
    disc_radius: float
    tint: np.ndarray


def _sequence_length(config: GenConfig, rng: np.random.Generator) -> int:
    extra = int(np.floor(rng.exponential(config.mean_extra_visits))) if config.mean_extra_visits > 0 else 0
    return min(config.max_length, config.min_length + extra)


def _visit_times(length: int, config: GenConfig, rng: np.random.Generator) -> np.ndarray:
    """Log-uniform gaps in [gap_min, gap_max] years."""
    gaps = np.exp(rng.uniform(np.log(config.gap_min), np.log(config.gap_max), size=length - 1))
    start = rng.uniform(0.0, 2.0)
    return start + np.concatenate([[0.0], np.cumsum(gaps)])


def _crossing_time(times: np.ndarray, visit: int, rng: np.random.Generator) -> float:
    """A time strictly between visit - 1 and visit."""
    return times[visit - 1] + rng.uniform(0.2, 0.8) * (times[visit] - times[visit - 1])


def _cup_disc_ratios(
    times: np.ndarray,
    variant: bool,
    config: GenConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    length = len(times)
    theta = config.cdr_threshold
    if not variant:
        high = theta - STABLE_MARGIN
        low = max(0.05, min(0.25, high / 2))
        first = rng.uniform(low, high)
        last = rng.uniform(first, high)
        span = times[-1] - times[0]
        return first + (last - first) * (times - times[0]) / span if span > 0 else np.full(length, first)

    # flip visit drawn from the last flip_window visits, never the first
    flip = length - int(rng.integers(1, min(config.flip_window, length - 1) + 1))
    crossing = _crossing_time(times, flip, rng)
    advanced = config.num_stages == 3 and length - flip >= 2 and rng.random() < 0.5
    if advanced:
        second_flip = int(rng.integers(flip + 1, length))
        second_crossing = _crossing_time(times, second_flip, rng)
        slope = (config.advanced_threshold - theta) / (second_crossing - crossing)
    else:
        slope = rng.uniform(0.03, 0.1)
    ratios = np.clip(theta + slope * (times - crossing), RATIO_FLOOR, RATIO_CEILING)
    if config.num_stages == 3 and not advanced:
        ratios = np.minimum(ratios, theta + 0.9 * (config.advanced_threshold - theta))
    return ratios


def stage_labels(ratios: np.ndarray, config: GenConfig) -> np.ndarray:
    """Number of disease thresholds each ratio exceeds."""
    labels = (ratios > config.cdr_threshold).astype(np.int64)
    if config.num_stages == 3:
        labels += (ratios > config.advanced_threshold).astype(np.int64)
    return labels


def _eye_geometry(config: GenConfig, rng: np.random.Generator) -> _EyeGeometry:
    size = config.image_size
    return _EyeGeometry(
        center_y=size / 2 + rng.uniform(-0.08, 0.08) * size,
        center_x=size / 2 + rng.uniform(-0.08, 0.08) * size,
        disc_radius=rng.uniform(0.2, 0.28) * size,
        tint=rng.uniform(0.85, 1.0, size=config.channels),
    )


def render_visit(ratio: float, eye: _EyeGeometry, config: GenConfig, rng: np.random.Generator) -> np.ndarray:
    """Bright disc with a darker cup of radius ``ratio``·disc on a smoothed-noise background."""
    size = config.image_size
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    cy = eye.center_y + rng.uniform(-0.5, 0.5)
    cx = eye.center_x + rng.uniform(-0.5, 0.5)
    dist = np.hypot(yy - cy, xx - cx)
    disc = expit((eye.disc_radius - dist) / EDGE_SOFTNESS)
    cup = expit((ratio * eye.disc_radius - dist) / EDGE_SOFTNESS)
    intensity = 0.15 + 0.6 * disc - 0.3 * cup
    field = gaussian_filter(rng.standard_normal((size, size)), sigma=1.5)
    field /= field.std() or 1.0
    image = intensity[..., None] * eye.tint + config.noise_level * field[..., None]
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def generate_sequence(config: GenConfig, variant: bool, seed_seq: np.random.SeedSequence) -> SequenceSample:
    """Build one sequence from its own sub-seed."""
    rng = np.random.default_rng(seed_seq)
    length = _sequence_length(config, rng)
    times = _visit_times(length, config, rng)
    ratios = _cup_disc_ratios(times, variant, config, rng)
    eye = _eye_geometry(config, rng)
    images = np.stack([render_visit(r, eye, config, rng) for r in ratios])
    return SequenceSample(
        timestamps=times,
        images=images,
        labels=stage_labels(ratios, config),
        variant=variant,
        cup_disc=ratios,
    )


def _seeds(config: GenConfig) -> List[np.random.SeedSequence]:
    """Child 0 drives dataset-level choices; child i+1 drives sequence i."""
    return np.random.SeedSequence(config.seed).spawn(config.num_sequences + 1)


def _variant_flags(config: GenConfig, seed_seq: np.random.SeedSequence) -> np.ndarray:
    n = config.num_sequences
    num_variant = int(round(n * config.variant_fraction))
    flags = np.zeros(n, dtype=bool)
    flags[np.random.default_rng(seed_seq).permutation(n)[:num_variant]] = True
    return flags


def generate(config: GenConfig) -> List[SequenceSample]:
    """Deterministic in ``config.seed``; the worker count does not change the result."""
    seeds = _seeds(config)
    flags = _variant_flags(config, seeds[0])
    logger.info(
        f"🧪 Generating {config.num_sequences} sequences "
        f"({int(flags.sum())} time-variant, workers={config.workers})"
    )

    def build(i: int) -> SequenceSample:
        return generate_sequence(config, bool(flags[i]), seeds[i + 1])

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            samples = list(pool.map(build, range(config.num_sequences)))
    else:
        samples = [build(i) for i in range(config.num_sequences)]
    logger.info(f"✅ Generated {sum(s.length for s in samples)} visits")
    return samples


def assign_splits(samples: Sequence[SequenceSample], config: GenConfig) -> List[str]:
    """Sequence-level train/val/test membership, stratified by variant status."""
    # spawn keys 0..n belong to generate()
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(config.num_sequences + 1,)))
    splits = [""] * len(samples)
    for variant in (True, False):
        members = [i for i, s in enumerate(samples) if s.variant == variant]
        order = rng.permutation(len(members))
        n_train = int(round(len(members) * config.train_fraction))
        n_val = int(round(len(members) * config.val_fraction))
        for rank, position in enumerate(order):
            if rank < n_train:
                split = "train"
            elif rank < n_train + n_val:
                split = "val"
            else:
                split = "test"
            splits[members[position]] = split
    return splits


def write_manifest(splits: Sequence[str], path: Union[str, Path]) -> Path:
    """One ``index<TAB>split`` line per sequence."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{i}\t{split}\n" for i, split in enumerate(splits)))
    return path


def read_manifest(path: Union[str, Path]) -> Dict[str, List[int]]:
    """Sequence indices per split."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    members: Dict[str, List[int]] = {split: [] for split in SPLITS}
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].isdigit() or parts[1] not in members:
            raise DatasetError(f"{path}:{line_no}: expected '<index>\\t<train|val|test>', got {line!r}")
        members[parts[1]].append(int(parts[0]))
    return members
