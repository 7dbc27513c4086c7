"""Loads a trained checkpoint once and answers single-history forecasts."""
import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Union

import numpy as np

from mstformer.config import get_settings, load_experiment_config
from mstformer.exceptions import ConfigurationError
from mstformer.models.embedding import ClipBatch
from mstformer.models.mst_former import MSTFormer
from mstformer.schemas.forecast import ForecastRequest, ForecastResponse, ModelInfoResponse
from mstformer.services.trainer import CONFIG_FILE, load_model

logger = logging.getLogger(__name__)


@dataclass
class Predictor:
    model: MSTFormer
    checkpoint_path: Optional[str] = None

    @classmethod
    def from_files(
        cls,
        checkpoint_path: Union[str, Path],
        config_path: Optional[Union[str, Path]] = None,
    ) -> "Predictor":
        """Config defaults to the ``config.cfg`` saved next to the checkpoint."""
        checkpoint_path = Path(checkpoint_path)
        config_path = Path(config_path) if config_path else checkpoint_path.parent / CONFIG_FILE
        config = load_experiment_config(config_path)
        model = load_model(config.model, checkpoint_path)
        logger.info(f"🧠 Predictor ready: {checkpoint_path} ({model.params.num_parameters:,} parameters)")
        return cls(model=model, checkpoint_path=str(checkpoint_path))

    def info(self) -> ModelInfoResponse:
        return ModelInfoResponse(
            config=self.model.config,
            num_parameters=self.model.params.num_parameters,
            checkpoint_path=self.checkpoint_path,
        )

    def forecast(self, request: ForecastRequest) -> ForecastResponse:
        """Probabilities for the visit after the last one in ``request``."""
        config = self.model.config
        try:
            images = np.asarray(request.images, dtype=np.float64)
        except ValueError as exc:
            raise ConfigurationError(f"images are not a rectangular L x H x W x C array: {exc}") from exc
        expected = (config.image_size, config.image_size, config.channels)
        if images.ndim != 4 or images.shape[1:] != expected:
            raise ConfigurationError(f"images must be L x {expected[0]} x {expected[1]} x {expected[2]}, got {images.shape}")
        labels = np.asarray(request.labels, dtype=np.int64)
        batch = ClipBatch(
            images=images[None],
            timestamps=np.asarray(request.timestamps, dtype=np.float64)[None],
            input_labels=labels[None],
            target_labels=np.zeros_like(labels)[None],
        )
        probs = self.model.predict_next(batch)[0]
        return ForecastResponse(
            probabilities=probs.tolist(),
            predicted_class=int(np.argmax(probs)),
            decision_rule="argmax",
            visits_used=len(labels),
        )


@lru_cache
def get_predictor() -> Predictor:
    """FastAPI dependency: the predictor configured through MST_* settings."""
    settings = get_settings()
    if not settings.checkpoint_path:
        raise ConfigurationError("MST_CHECKPOINT_PATH is not set; no model to serve")
    return Predictor.from_files(settings.checkpoint_path, settings.config_path)
