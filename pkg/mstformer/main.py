"""FastAPI application entry point."""
import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from mstformer.api.forecast import router as forecast_router
from mstformer.config import configure_logging, get_settings

configure_logging(get_settings())

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Report which checkpoint will be served; the model itself loads on first use."""
    settings = get_settings()
    if settings.checkpoint_path:
        logger.info(f"🚀 Serving checkpoint {settings.checkpoint_path} ({settings.app_env})")
    else:
        logger.warning("⚠️ MST_CHECKPOINT_PATH not set; forecast endpoints will return 503")
    yield


app = FastAPI(
    title="MST-former Forecast Service",
    description="Forecast the next-visit label of an irregularly sampled image sequence",
    version="0.1.0",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(forecast_router)


@app.get("/health")
async def health_check():
    """Health check endpoint."""
    return {"status": "healthy"}
