"""Training loop, checkpointing and evaluation orchestration."""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from mstformer.config import dump_experiment_config
from mstformer.core.checkpoint import load_params, save_params
from mstformer.core.tensor import Tensor, backward
from mstformer.exceptions import DatasetError, NumericError, UndefinedMetricError
from mstformer.models.mst_former import MSTFormer
from mstformer.schemas.config import ExperimentConfig, ModelConfig, TrainConfig
from mstformer.schemas.metrics import LossRecord, MetricReport
from mstformer.services.clips import Clip, class_counts, clips_for, collate, final_targets
from mstformer.services.data_synth import read_manifest
from mstformer.services.dataset_io import load_dataset
from mstformer.services.losses import sequence_loss
from mstformer.services.metrics import build_report
from mstformer.services.optimizer import OptimizerState, collect_grads, lr_at, sgd_step

logger = logging.getLogger(__name__)

BEST_CHECKPOINT = "best.mstp"
FINAL_CHECKPOINT = "final.mstp"
LOSS_LOG = "loss.jsonl"
METRIC_LOG = "metrics.jsonl"
CONFIG_FILE = "config.cfg"
EVAL_BATCH_SIZE = 16


@dataclass
class TrainResult:
    """What a training run leaves behind."""

    model: MSTFormer
    best_params: Dict[str, Tensor]
    loss_log: List[LossRecord] = field(default_factory=list)
    reports: List[MetricReport] = field(default_factory=list)
    best_auc: Optional[float] = None
    total_steps: int = 0
    out_dir: Optional[Path] = None

    def best_model(self) -> MSTFormer:
        return MSTFormer.from_tensors(self.model.config, self.best_params)


def _snapshot(model: MSTFormer) -> Dict[str, Tensor]:
    return {name: t.detach() for name, t in model.params.items()}


def total_steps_for(num_clips: int, cfg: TrainConfig) -> int:
    """epochs · ⌈clips / batch⌉, capped by ``max_steps``."""
    total = cfg.epochs * math.ceil(num_clips / cfg.batch_size)
    return min(total, cfg.max_steps) if cfg.max_steps else total


def predict_clips(model: MSTFormer, clips: Sequence[Clip], batch_size: int = EVAL_BATCH_SIZE) -> np.ndarray:
    """[M, k] next-visit probabilities for every clip."""
    chunks = [
        model.predict_next(collate(clips[i:i + batch_size])) for i in range(0, len(clips), batch_size)
    ]
    return np.concatenate(chunks) if chunks else np.zeros((0, model.config.num_classes))


def evaluate_clips(
    model: MSTFormer,
    clips: Sequence[Clip],
    split: str,
    epoch: Optional[int] = None,
) -> MetricReport:
    """Score the final-position forecast of every clip."""
    if not clips:
        raise DatasetError(f"split '{split}' has no clips to evaluate")
    return build_report(predict_clips(model, clips), final_targets(clips), split=split, epoch=epoch)


class _RunLog:
    """JSON-lines sinks for loss and metric records (no-op without an output directory)."""

    def __init__(self, out_dir: Optional[Path]):
        self.out_dir = out_dir
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            for name in (LOSS_LOG, METRIC_LOG):
                (out_dir / name).write_text("")

    def append(self, name: str, record) -> None:
        if self.out_dir is None:
            return
        with open(self.out_dir / name, "a") as fh:
            fh.write(record.model_dump_json() + "\n")


def fit(
    model_config: ModelConfig,
    train_config: TrainConfig,
    train_clips: Sequence[Clip],
    val_clips: Sequence[Clip] = (),
    out_dir: Optional[Union[str, Path]] = None,
) -> TrainResult:
    """Optimise a freshly initialised model on in-memory clips.

    Args:
        model_config: network hyperparameters
        train_config: optimisation settings; ``seed`` fixes init, shuffles and dropout
        train_clips: clips to learn from
        val_clips: scored every ``eval_every`` epochs; the best AUC is kept
        out_dir: when set, receives checkpoints and JSON-lines logs
    """
    if not train_clips:
        raise DatasetError("no training clips")
    out_dir = Path(out_dir) if out_dir is not None else None
    cfg = train_config
    counts = (
        class_counts(train_clips, model_config.num_classes, cfg.tau) if cfg.loss == "balanced" else None
    )
    model = MSTFormer.initialize(model_config, seed=cfg.seed)
    shuffle_seed, dropout_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    dropout_rng = np.random.default_rng(dropout_seed) if model_config.dropout > 0 else None

    total = total_steps_for(len(train_clips), cfg)
    lr_at(0, total, cfg)  # rejects schedules with no room after warmup
    steps_per_epoch = math.ceil(len(train_clips) / cfg.batch_size)
    state = OptimizerState.zeros_like(model.params)
    result = TrainResult(model=model, best_params=_snapshot(model), total_steps=total, out_dir=out_dir)
    log = _RunLog(out_dir)
    logger.info(
        f"🚀 Training on {len(train_clips)} clips: {total} steps "
        f"({steps_per_epoch}/epoch), loss={cfg.loss}"
        + (f", counts={counts.counts}, tau={cfg.tau}" if counts else "")
    )

    step = 0
    epoch = 0
    while step < total:
        order = shuffle_rng.permutation(len(train_clips))
        for start in range(0, len(order), cfg.batch_size):
            if step >= total:
                break
            batch = collate([train_clips[i] for i in order[start:start + cfg.batch_size]])
            logits = model(batch, dropout_rng)
            loss = sequence_loss(logits, batch.target_labels, cfg.loss, counts)
            if not np.isfinite(loss.item()):
                raise NumericError(f"non-finite loss {loss.item()} at epoch {epoch}", step=step)
            model.params.zero_grad()
            backward(loss)
            lr = lr_at(step, total, cfg)
            sgd_step(
                model.params,
                collect_grads(model.params),
                state,
                lr,
                momentum=cfg.momentum,
                weight_decay=cfg.weight_decay,
                max_norm=cfg.grad_clip_norm,
            )
            record = LossRecord(step=step, epoch=epoch, loss=loss.item(), lr=lr)
            result.loss_log.append(record)
            log.append(LOSS_LOG, record)
            logger.debug(f"step {step}: loss={record.loss:.6f} lr={lr:.3e}")
            step += 1

        epoch_loss = np.mean([r.loss for r in result.loss_log if r.epoch == epoch])
        logger.info(f"📉 Epoch {epoch}: mean loss {epoch_loss:.4f}")
        last_epoch = step >= total
        if val_clips and ((epoch + 1) % cfg.eval_every == 0 or last_epoch):
            _validate(result, val_clips, epoch, log)
        epoch += 1

    if result.best_auc is None:
        # no validation score: keep the final weights
        result.best_params = _snapshot(model)
    if out_dir is not None:
        save_params(model.params.as_dict(), out_dir / FINAL_CHECKPOINT)
        save_params(result.best_params, out_dir / BEST_CHECKPOINT)
    logger.info(f"🏁 Finished {step} steps; best validation AUC={result.best_auc}")
    return result


def _validate(result: TrainResult, val_clips: Sequence[Clip], epoch: int, log: _RunLog) -> None:
    try:
        report = evaluate_clips(result.model, val_clips, split="val", epoch=epoch)
    except UndefinedMetricError as exc:
        logger.warning(f"⚠️ Validation metrics undefined at epoch {epoch}: {exc}")
        return
    result.reports.append(report)
    log.append(METRIC_LOG, report)
    if result.best_auc is None or report.auc > result.best_auc:
        result.best_auc = report.auc
        result.best_params = _snapshot(result.model)
        logger.info(f"⭐ New best validation AUC {report.auc:.4f} at epoch {epoch}")


def load_split_clips(
    dataset_path: Union[str, Path],
    manifest_path: Union[str, Path],
    splits: Sequence[str],
    length: int,
    stride: int = 1,
) -> Dict[str, List[Clip]]:
    """Read the container once and cut clips for each requested split."""
    samples = load_dataset(dataset_path)
    members = read_manifest(manifest_path)
    if any(i >= len(samples) for indices in members.values() for i in indices):
        raise DatasetError(f"manifest {manifest_path} names sequences beyond the {len(samples)} in {dataset_path}")
    return {split: clips_for(samples, members[split], length, stride)[0] for split in splits}


def train(
    config: ExperimentConfig,
    dataset_path: Union[str, Path],
    manifest_path: Union[str, Path],
    out_dir: Union[str, Path],
) -> TrainResult:
    """Train from files; writes checkpoints, logs and the resolved config to ``out_dir``."""
    out_dir = Path(out_dir)
    cfg = config.train
    clips = load_split_clips(dataset_path, manifest_path, ("train", "val"), cfg.clip_length, cfg.clip_stride)
    result = fit(config.model, cfg, clips["train"], clips["val"], out_dir)
    dump_experiment_config(config, out_dir / CONFIG_FILE)
    return result


def load_model(config: ModelConfig, checkpoint_path: Union[str, Path]) -> MSTFormer:
    """Rebuild a model, naming the first parameter that does not fit ``config``."""
    return MSTFormer.from_tensors(config, load_params(checkpoint_path))


def evaluate(
    checkpoint_path: Union[str, Path],
    config: ExperimentConfig,
    dataset_path: Union[str, Path],
    manifest_path: Union[str, Path],
    split: str = "test",
) -> MetricReport:
    """Final-position metrics of a checkpoint on one split."""
    model = load_model(config.model, checkpoint_path)
    cfg = config.train
    clips = load_split_clips(dataset_path, manifest_path, (split,), cfg.clip_length, cfg.clip_stride)[split]
    return evaluate_clips(model, clips, split=split)

