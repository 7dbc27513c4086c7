"""Forecast API endpoints."""
import logging

from fastapi import APIRouter, Depends, HTTPException

from mstformer.exceptions import ConfigurationError, ContractError, DatasetError, MSTFormerError
from mstformer.schemas.forecast import ForecastRequest, ForecastResponse, ModelInfoResponse
from mstformer.services.predictor import Predictor, get_predictor

router = APIRouter(prefix="/api", tags=["forecast"])

logger = logging.getLogger(__name__)


def current_predictor() -> Predictor:
    """Resolve the served model; 503 until a checkpoint is configured."""
    try:
        return get_predictor()
    except (MSTFormerError, OSError) as exc:
        logger.error(f"❌ No model available: {exc}")
        raise HTTPException(status_code=503, detail=f"Model unavailable: {exc}")


@router.get("/model", response_model=ModelInfoResponse)
def model_info(predictor: Predictor = Depends(current_predictor)):
    """Config and size of the loaded model."""
    return predictor.info()


@router.post("/forecast", response_model=ForecastResponse)
def forecast(request: ForecastRequest, predictor: Predictor = Depends(current_predictor)):
    """
    Forecast the label of the next visit.

    The history must be ordered by time; labels are the observed
    labels of those visits.
    """
    try:
        response = predictor.forecast(request)
    except (ConfigurationError, ContractError) as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    except DatasetError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    logger.info(f"🔮 Forecast over {response.visits_used} visits -> class {response.predicted_class}")
    return response
