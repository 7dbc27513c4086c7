"""Softmax cross-entropy and its class-balanced, temperature-controlled variant."""
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, field_validator

from mstformer.core import ops
from mstformer.core.tensor import Tensor
from mstformer.exceptions import ConfigurationError, ContractError


class ClassCounts(BaseModel):
    """Training-set frequency n_i of every class, plus the temperature τ."""

    counts: List[int] = Field(..., min_length=2)
    tau: float = Field(1.0, ge=0.0)

    @field_validator("counts")
    @classmethod
    def check_positive(cls, counts: List[int]) -> List[int]:
        if any(c < 1 for c in counts):
            raise ValueError(f"every class needs at least one training sample, got {counts}")
        return counts

    @property
    def num_classes(self) -> int:
        return len(self.counts)

    def log_prior(self) -> np.ndarray:
        """τ·log n_i, the offset added to the logits."""
        return self.tau * np.log(np.asarray(self.counts, dtype=np.float64))

    @classmethod
    def from_labels(cls, labels: Sequence[int], num_classes: int, tau: float = 1.0) -> "ClassCounts":
        """Count ``labels``; raises ConfigurationError when a class never occurs."""
        counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes)
        if len(counts) > num_classes:
            raise ConfigurationError(f"label {len(counts) - 1} outside [0, {num_classes})")
        try:
            return cls(counts=[int(c) for c in counts], tau=tau)
        except ValueError as exc:
            raise ConfigurationError(f"cannot balance the loss: class counts {counts.tolist()}") from exc


def _check_targets(logits: Tensor, targets: np.ndarray) -> np.ndarray:
    targets = np.asarray(targets)
    if logits.ndim != 2:
        raise ContractError(f"logits must be [M, k], got {logits.shape}")
    if targets.shape != (logits.shape[0],):
        raise ContractError(f"targets must be shaped ({logits.shape[0]},), got {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[1]):
        raise ContractError(f"targets outside [0, {logits.shape[1]})")
    return targets.astype(np.int64)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean over M of −log softmax(logits)[target]."""
    targets = _check_targets(logits, targets)
    log_probs = ops.log_softmax(logits, axis=-1)
    picked = ops.index(log_probs, (np.arange(len(targets)), targets))
    return ops.neg(ops.mean(picked))


def balanced_softmax_ce(logits: Tensor, targets: np.ndarray, counts: ClassCounts) -> Tensor:
    """Cross-entropy of the logits shifted by τ·log n_i.

    Equivalent to weighting each class's exponentiated logit by n_i^τ, but stays
    in log space.
    """
    if counts.num_classes != logits.shape[-1]:
        raise ConfigurationError(f"{counts.num_classes} class counts for {logits.shape[-1]} logits")
    return cross_entropy(ops.add(logits, counts.log_prior()), targets)


def sequence_loss(logits: Tensor, targets: np.ndarray, kind: str = "ce", counts: Optional[ClassCounts] = None) -> Tensor:
    """Average the per-position loss over every clip and decoder position.

    Args:
        logits: [B, L, k] model output
        targets: [B, L] next-visit labels
        kind: "ce" or "balanced"
        counts: required for "balanced"
    """
    batch, length, classes = logits.shape
    flat = ops.reshape(logits, (batch * length, classes))
    flat_targets = np.asarray(targets).reshape(-1)
    if kind == "ce":
        return cross_entropy(flat, flat_targets)
    if kind == "balanced":
        if counts is None:
            raise ConfigurationError("balanced loss needs class counts")
        return balanced_softmax_ce(flat, flat_targets, counts)
    raise ConfigurationError(f"unknown loss '{kind}'")
