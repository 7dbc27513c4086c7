"""Configuration schemas for the model, the trainer and the data generator."""
import math
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ModelConfig(BaseModel):
    """Hyperparameters of the multi-scale encoder-decoder."""

    model_config = ConfigDict(extra="forbid")

    image_size: int = Field(64, ge=1, description="Input height and width (H = W)")
    channels: int = Field(3, ge=1, description="Input channels C")
    num_scales: int = Field(3, ge=1, description="Scale count S")
    gamma: int = Field(2, ge=1, description="Scale-transition merge factor γ")
    patch_size: int = Field(8, ge=1, description="Patch size p")
    d_model: int = Field(96, ge=2, description="Embedding width d_m")
    num_heads: int = Field(4, ge=1, description="Attention heads Z")
    blocks_per_scale: int = Field(1, ge=1, description="Encoder/decoder blocks per scale")
    ff_mult: int = Field(4, ge=1, description="Feed-forward hidden width multiplier")
    alpha: float = Field(0.5, ge=0.0, description="Time-distance decay rate α")
    beta: float = Field(0.5, description="Time-distance offset β")
    num_classes: int = Field(2, ge=2, description="Class count k")
    encoder_causal: bool = Field(
        False,
        description="Mask future visits in encoder temporal attention; when off, visit i already sees later images",
    )
    dropout: float = Field(0.0, ge=0.0, lt=1.0, description="Dropout rate (training only)")
    use_stp: bool = Field(True, description="Add the space-time positional encoding")
    use_tta: bool = Field(True, description="Scale temporal attention scores by ω")

    @model_validator(mode="after")
    def check_shapes(self) -> "ModelConfig":
        if self.d_model % 2:
            raise ValueError(f"d_model must be even for the sinusoidal encodings, got {self.d_model}")
        if self.d_model % self.num_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by num_heads={self.num_heads}")
        if self.image_size % self.patch_size:
            raise ValueError(f"image_size={self.image_size} not divisible by patch_size={self.patch_size}")
        reduction = self.gamma ** (self.num_scales - 1)
        if self.grid_size % reduction:
            raise ValueError(
                f"token grid side {self.grid_size} not divisible by "
                f"gamma^(num_scales-1)={reduction}"
            )
        return self

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def head_dim(self) -> int:
        return self.d_model // self.num_heads

    def grid_at(self, scale: int) -> int:
        """Token grid side at 1-based ``scale``."""
        return self.grid_size // self.gamma ** (scale - 1)

    def tokens_at(self, scale: int) -> int:
        return self.grid_at(scale) ** 2


class TrainConfig(BaseModel):
    """Optimisation settings."""

    model_config = ConfigDict(extra="forbid")

    lr_base: float = Field(3e-4, gt=0.0, description="Peak learning rate")
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    batch_size: int = Field(4, ge=1)
    epochs: int = Field(300, ge=1)
    warmup_steps: Optional[int] = Field(None, ge=1, description="Defaults to 5% of total steps")
    max_steps: Optional[int] = Field(None, ge=1, description="Stop after this many steps")
    seed: int = Field(0, ge=0)
    loss: Literal["ce", "balanced"] = "balanced"
    tau: float = Field(2.0, ge=0.0, description="Balanced Softmax temperature τ")
    eval_every: int = Field(1, ge=1, description="Validation interval in epochs")
    grad_clip_norm: Optional[float] = Field(None, gt=0.0, description="Global norm clip (off by default)")
    weight_decay: float = Field(0.0, ge=0.0, description="L2 penalty folded into the gradient")
    clip_length: int = Field(6, ge=2, description="Visits per clip (inputs + final target)")
    clip_stride: int = Field(1, ge=1)

    def warmup_for(self, total_steps: int) -> int:
        if self.warmup_steps is not None:
            return self.warmup_steps
        return max(1, math.ceil(0.05 * total_steps))


class GenConfig(BaseModel):
    """Synthetic longitudinal dataset parameters."""

    model_config = ConfigDict(extra="forbid")

    num_sequences: int = Field(405, ge=0)
    min_length: int = Field(6, ge=1)
    max_length: int = Field(28, ge=1)
    mean_extra_visits: float = Field(3.0, ge=0.0, description="Mean visits beyond min_length")
    image_size: int = Field(64, ge=8)
    channels: int = Field(3, ge=1)
    variant_fraction: float = Field(37 / 405, ge=0.0, le=1.0)
    flip_window: int = Field(
        3, ge=1, description="Variant labels flip within the last flip_window visits; >= max_length allows any visit"
    )
    num_stages: int = Field(2, ge=2, le=3, description="Label count; 3 adds an advanced stage")
    gap_min: float = Field(0.25, gt=0.0, description="Shortest inter-visit gap (years)")
    gap_max: float = Field(4.0, gt=0.0, description="Longest inter-visit gap (years)")
    cdr_threshold: float = Field(0.6, gt=0.2, lt=0.95, description="Cup/disc ratio marking disease")
    advanced_threshold: float = Field(0.75, gt=0.2, lt=0.95, description="Second ratio threshold (num_stages=3)")
    noise_level: float = Field(0.05, ge=0.0)
    train_fraction: float = Field(300 / 405, gt=0.0, lt=1.0)
    val_fraction: float = Field(35 / 405, ge=0.0, lt=1.0)
    seed: int = Field(0, ge=0)
    clip_length: int = Field(6, ge=2)
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def check_ranges(self) -> "GenConfig":
        if self.min_length < self.clip_length:
            raise ValueError(
                f"min_length={self.min_length} shorter than clip_length={self.clip_length}"
            )
        if self.max_length < self.min_length:
            raise ValueError(f"max_length={self.max_length} < min_length={self.min_length}")
        if self.gap_max < self.gap_min:
            raise ValueError(f"gap_max={self.gap_max} < gap_min={self.gap_min}")
        if self.train_fraction + self.val_fraction >= 1.0:
            raise ValueError("train_fraction + val_fraction must leave room for a test split")
        if self.num_stages == 3 and self.advanced_threshold <= self.cdr_threshold:
            raise ValueError("advanced_threshold must exceed cdr_threshold")
        return self


class ExperimentConfig(BaseModel):
    """The three config sections resolved from one config file."""

    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    gen: GenConfig = Field(default_factory=GenConfig)
