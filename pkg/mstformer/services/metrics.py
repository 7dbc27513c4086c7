"""Evaluation metrics: Mann-Whitney AUC, ACC/SEN/SPE, macro one-vs-one averaging."""
import logging
from itertools import permutations
from typing import Optional, Tuple

import numpy as np
from scipy.stats import rankdata

from mstformer.exceptions import ContractError, UndefinedMetricError
from mstformer.schemas.metrics import MetricReport, PairMetrics

logger = logging.getLogger(__name__)

THRESHOLD_RULE = "argmax"


def _binary_labels(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ContractError(f"labels must be 1-d, got shape {labels.shape}")
    if not np.isin(labels, (0, 1)).all():
        raise ContractError("binary metrics need labels in {0, 1}")
    return labels.astype(bool)


def auc_binary(scores: np.ndarray, labels: np.ndarray) -> float:
    """P(score of a random positive > score of a random negative), ties counted ½."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = _binary_labels(labels)
    if scores.shape != positive.shape:
        raise ContractError(f"scores {scores.shape} and labels {positive.shape} differ")
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"AUC needs both classes (positives={n_pos}, negatives={n_neg})")
    # Sums of midranks are multiples of 1/2, so the U statistic is exact.
    ranks = rankdata(scores, method="average")
    u_statistic = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_statistic / (n_pos * n_neg))


def acc_sen_spe(preds: np.ndarray, labels: np.ndarray) -> Tuple[float, float, float]:
    """(TP+TN)/M, TP/(TP+FN), TN/(TN+FP) for hard binary predictions."""
    truth = _binary_labels(labels)
    predicted = _binary_labels(preds)
    if predicted.shape != truth.shape:
        raise ContractError(f"predictions {predicted.shape} and labels {truth.shape} differ")
    if truth.size == 0:
        raise UndefinedMetricError("no samples to score")
    tp = int(np.sum(predicted & truth))
    tn = int(np.sum(~predicted & ~truth))
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0:
        raise UndefinedMetricError("sensitivity is undefined without positive samples")
    if n_neg == 0:
        raise UndefinedMetricError("specificity is undefined without negative samples")
    return (tp + tn) / truth.size, tp / n_pos, tn / n_neg


def confusion_matrix(labels: np.ndarray, preds: np.ndarray, num_classes: int) -> np.ndarray:
    """k×k counts; rows are true classes, columns predicted classes."""
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    matrix = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(matrix, (labels, preds), 1)
    return matrix


def _check_scores(scores: np.ndarray, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise ContractError(f"scores must be [M, k] matching {labels.shape[0]} labels, got {scores.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= scores.shape[1]):
        raise ContractError(f"labels outside [0, {scores.shape[1]})")
    return scores, labels


def pair_metrics(scores: np.ndarray, labels: np.ndarray, positive: int, negative: int) -> PairMetrics:
    """Binary metrics on the samples of two classes, ``positive`` scored by its own column."""
    scores, labels = _check_scores(scores, labels)
    keep = (labels == positive) | (labels == negative)
    if not keep.any():
        raise UndefinedMetricError(f"no samples of class {positive} or {negative}")
    sub_scores = scores[keep][:, [positive, negative]]
    truth = labels[keep] == positive
    preds = np.argmax(sub_scores, axis=1) == 0
    acc, sen, spe = acc_sen_spe(preds.astype(int), truth.astype(int))
    return PairMetrics(
        positive=positive,
        negative=negative,
        auc=auc_binary(sub_scores[:, 0], truth.astype(int)),
        acc=acc,
        sen=sen,
        spe=spe,
    )


def macro_one_vs_one(
    scores: np.ndarray,
    labels: np.ndarray,
    split: str = "test",
    epoch: Optional[int] = None,
) -> MetricReport:
    """Average the binary metrics over every ordered class pair.

    With two classes this is the plain binary report on the positive column.
    """
    scores, labels = _check_scores(scores, labels)
    num_classes = scores.shape[1]
    missing = [c for c in range(num_classes) if not np.any(labels == c)]
    if missing:
        raise UndefinedMetricError(f"classes {missing} have no samples")
    preds = np.argmax(scores, axis=1)
    confusion = confusion_matrix(labels, preds, num_classes)
    recall = (np.diag(confusion) / confusion.sum(axis=1)).tolist()

    if num_classes == 2:
        acc, sen, spe = acc_sen_spe(preds, labels)
        return MetricReport(
            split=split,
            epoch=epoch,
            auc=auc_binary(scores[:, 1], labels),
            acc=acc,
            sen=sen,
            spe=spe,
            confusion=confusion.tolist(),
            num_samples=int(labels.size),
            threshold_rule=THRESHOLD_RULE,
            averaging="binary",
            per_class_recall=recall,
        )

    pairs = [pair_metrics(scores, labels, i, j) for i, j in permutations(range(num_classes), 2)]
    return MetricReport(
        split=split,
        epoch=epoch,
        auc=float(np.mean([p.auc for p in pairs])),
        acc=float(np.mean([p.acc for p in pairs])),
        sen=float(np.mean([p.sen for p in pairs])),
        spe=float(np.mean([p.spe for p in pairs])),
        confusion=confusion.tolist(),
        num_samples=int(labels.size),
        threshold_rule=THRESHOLD_RULE,
        averaging="macro-ovo",
        per_pair=pairs,
        per_class_recall=recall,
    )


def build_report(probs: np.ndarray, labels: np.ndarray, split: str, epoch: Optional[int] = None) -> MetricReport:
    """Score final-position forecasts for one split."""
    report = macro_one_vs_one(probs, labels, split=split, epoch=epoch)
    logger.info(
        f"📈 {split} (epoch={epoch}): auc={report.auc:.4f} acc={report.acc:.4f} "
        f"sen={report.sen:.4f} spe={report.spe:.4f} n={report.num_samples}"
    )
    return report
