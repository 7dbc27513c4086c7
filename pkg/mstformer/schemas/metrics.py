"""Metric and log record schemas (serialised as JSON lines)."""
from typing import List, Optional

from pydantic import BaseModel, Field


class PairMetrics(BaseModel):
    """Binary metrics for one ordered class pair (positive, negative)."""

    positive: int
    negative: int
    auc: float = Field(..., ge=0.0, le=1.0)
    acc: float = Field(..., ge=0.0, le=1.0)
    sen: float = Field(..., ge=0.0, le=1.0)
    spe: float = Field(..., ge=0.0, le=1.0)


class MetricReport(BaseModel):
    """Evaluation summary for one split at one point in training."""

    split: str = "test"
    epoch: Optional[int] = None
    auc: float = Field(..., ge=0.0, le=1.0)
    acc: float = Field(..., ge=0.0, le=1.0)
    sen: float = Field(..., ge=0.0, le=1.0)
    spe: float = Field(..., ge=0.0, le=1.0)
    confusion: List[List[int]]
    num_samples: int = Field(..., ge=0)
    threshold_rule: str = Field("argmax", description="How hard predictions are made")
    averaging: str = Field("binary", description="'binary' or 'macro-ovo'")
    per_pair: Optional[List[PairMetrics]] = None
    per_class_recall: Optional[List[float]] = None


class LossRecord(BaseModel):
    """One optimisation step."""

    step: int
    epoch: int
    loss: float
    lr: float


class AblationRecord(BaseModel):
    """Test-split result of one (variant, seed) run of an ablation grid."""

    grid: str
    variant: str
    seed: int
    report: MetricReport


class AblationSummary(BaseModel):
    """Seed-averaged metrics of one variant."""

    grid: str
    variant: str
    seeds: List[int]
    auc: float
    acc: float
    sen: float
    spe: float
