"""Forecast service request and response schemas."""
from typing import List, Optional

from pydantic import BaseModel, Field, model_validator

from mstformer.schemas.config import ModelConfig


class ForecastRequest(BaseModel):
    """One observed history: visits with timestamps, images and labels."""

    timestamps: List[float] = Field(..., min_length=1, description="Visit times in years, increasing")
    labels: List[int] = Field(..., min_length=1, description="Observed label of each visit")
    images: List[List[List[List[float]]]] = Field(..., min_length=1, description="L x H x W x C in [0, 1]")

    @model_validator(mode="after")
    def check_lengths(self) -> "ForecastRequest":
        if not (len(self.timestamps) == len(self.labels) == len(self.images)):
            raise ValueError("timestamps, labels and images must have the same number of visits")
        if any(b <= a for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise ValueError("timestamps must be strictly increasing")
        shapes = {(len(image), len(row), len(pixel)) for image in self.images for row in image for pixel in row}
        widths = {len(row) for image in self.images for row in image}
        heights = {len(image) for image in self.images}
        if len(shapes) != 1 or len(widths) != 1 or len(heights) != 1:
            raise ValueError("images must all be rectangular arrays of the same H x W x C")
        return self


class ForecastResponse(BaseModel):
    """Next-visit class probabilities."""

    probabilities: List[float]
    predicted_class: int
    decision_rule: str = "argmax"
    visits_used: int


class ModelInfoResponse(BaseModel):
    """Loaded model description."""

    config: ModelConfig
    num_parameters: int
    checkpoint_path: Optional[str] = None
