"""Ablation grids: component removal, scale count and loss temperature."""
import logging
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from mstformer.exceptions import ConfigurationError, UndefinedMetricError
from mstformer.schemas.config import ExperimentConfig, ModelConfig, TrainConfig
from mstformer.schemas.metrics import AblationRecord, AblationSummary
from mstformer.services.clips import Clip
from mstformer.services.trainer import evaluate_clips, fit

logger = logging.getLogger(__name__)

GRIDS = ("components", "full-components", "scales", "tau")
TAU_VALUES = (1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5)
MAX_SCALES = 4
RECORDS_FILE = "ablation.jsonl"
SUMMARY_FILE = "ablation_summary.jsonl"

Variant = Tuple[str, ExperimentConfig]


def _with_model(base: ExperimentConfig, **changes) -> ExperimentConfig:
    try:
        model = ModelConfig(**{**base.model.model_dump(), **changes})
    except ValidationError as exc:
        raise ConfigurationError(str(exc)) from exc
    return base.model_copy(update={"model": model})


def _with_train(base: ExperimentConfig, **changes) -> ExperimentConfig:
    try:
        train = TrainConfig(**{**base.train.model_dump(), **changes})
    except ValidationError as exc:
        raise ConfigurationError(str(exc)) from exc
    return base.model_copy(update={"train": train})


def _component_config(base: ExperimentConfig, stp: bool, tta: bool, ms: bool) -> ExperimentConfig:
    """Without MS the model runs 3 blocks at a single scale."""
    changes = {"use_stp": stp, "use_tta": tta}
    if not ms:
        changes.update(num_scales=1, blocks_per_scale=3)
    return _with_model(base, **changes)


def _component_name(stp: bool, tta: bool, ms: bool) -> str:
    kept = [name for name, on in (("stp", stp), ("tta", tta), ("ms", ms)) if on]
    return "+".join(kept) if kept else "none"


def grid_variants(grid: str, base: ExperimentConfig) -> List[Variant]:
    """Named configs of one grid, derived from ``base``."""
    if grid == "components":
        return [
            ("full", _component_config(base, True, True, True)),
            ("-stp", _component_config(base, False, True, True)),
            ("-tta", _component_config(base, True, False, True)),
            ("-ms", _component_config(base, True, True, False)),
        ]
    if grid == "full-components":
        return [
            (_component_name(*flags), _component_config(base, *flags))
            for flags in product((True, False), repeat=3)
        ]
    if grid == "scales":
        variants = []
        for scales in range(1, MAX_SCALES + 1):
            try:
                variants.append((f"S={scales}", _with_model(base, num_scales=scales, blocks_per_scale=1)))
            except ConfigurationError:
                logger.warning(f"⚠️ Skipping S={scales}: token grid too small for {scales} scales")
        return variants
    if grid == "tau":
        variants = [("ce", _with_train(base, loss="ce"))]
        variants += [(f"tau={tau:.2f}", _with_train(base, loss="balanced", tau=tau)) for tau in TAU_VALUES]
        return variants
    raise ConfigurationError(f"unknown ablation grid '{grid}' (choose from {', '.join(GRIDS)})")


def summarize(grid: str, records: Sequence[AblationRecord]) -> List[AblationSummary]:
    """Seed-averaged metrics per variant, in first-seen order."""
    by_variant: Dict[str, List[AblationRecord]] = {}
    for record in records:
        by_variant.setdefault(record.variant, []).append(record)
    return [
        AblationSummary(
            grid=grid,
            variant=variant,
            seeds=[r.seed for r in runs],
            auc=float(np.mean([r.report.auc for r in runs])),
            acc=float(np.mean([r.report.acc for r in runs])),
            sen=float(np.mean([r.report.sen for r in runs])),
            spe=float(np.mean([r.report.spe for r in runs])),
        )
        for variant, runs in by_variant.items()
    ]


def run_ablation(
    grid: str,
    base: ExperimentConfig,
    train_clips: Sequence[Clip],
    val_clips: Sequence[Clip],
    test_clips: Sequence[Clip],
    seeds: Sequence[int],
    out_dir: Optional[Union[str, Path]] = None,
) -> Tuple[List[AblationRecord], List[AblationSummary]]:
    """Train every (variant, seed) pair and score its best checkpoint on the test clips."""
    variants = grid_variants(grid, base)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / RECORDS_FILE).write_text("")
    records: List[AblationRecord] = []
    for name, config in variants:
        for seed in seeds:
            logger.info(f"🔬 {grid}: variant {name}, seed {seed}")
            train_config = config.train.model_copy(update={"seed": seed})
            result = fit(config.model, train_config, train_clips, val_clips)
            try:
                report = evaluate_clips(result.best_model(), test_clips, split="test")
            except UndefinedMetricError as exc:
                logger.warning(f"⚠️ {name} seed {seed}: test metrics undefined ({exc})")
                continue
            record = AblationRecord(grid=grid, variant=name, seed=seed, report=report)
            records.append(record)
            if out_dir is not None:
                with open(out_dir / RECORDS_FILE, "a") as fh:
                    fh.write(record.model_dump_json() + "\n")
    summaries = summarize(grid, records)
    if out_dir is not None:
        (out_dir / SUMMARY_FILE).write_text("".join(s.model_dump_json() + "\n" for s in summaries))
    for summary in summaries:
        logger.info(
            f"📊 {summary.variant}: auc={summary.auc:.4f} sen={summary.sen:.4f} spe={summary.spe:.4f}"
        )
    return records, summaries
