"""Runtime settings and experiment config files."""
import logging
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Union

from dotenv import dotenv_values
from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from mstformer.exceptions import ConfigurationError
from mstformer.schemas.config import ExperimentConfig, GenConfig, ModelConfig, TrainConfig

logger = logging.getLogger(__name__)

SECTIONS = {"model": ModelConfig, "train": TrainConfig, "gen": GenConfig}


class Settings(BaseSettings):
    """Process settings loaded from MST_* environment variables or .env."""

    model_config = SettingsConfigDict(env_prefix="MST_", env_file=".env", extra="ignore")

    app_env: str = "development"
    log_level: str = "INFO"
    log_file: Optional[str] = None

    # Forecast service
    config_path: Optional[str] = None
    checkpoint_path: Optional[str] = None

    output_dir: str = "runs"


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


def parse_overrides(pairs: Iterable[str]) -> Dict[str, str]:
    """Turn ``key=value`` CLI flags into a mapping."""
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"override '{pair}' is not of the form key=value")
        overrides[key.strip()] = value.strip()
    return overrides


def build_experiment_config(values: Mapping[str, Optional[str]]) -> ExperimentConfig:
    """Route flat keys to the sections declaring them and validate each section."""
    routed: Dict[str, Dict[str, str]] = {name: {} for name in SECTIONS}
    for key, value in values.items():
        if value is None or value == "":
            continue
        owners = [name for name, schema in SECTIONS.items() if key in schema.model_fields]
        if not owners:
            raise ConfigurationError(f"unknown config key '{key}'")
        for owner in owners:
            routed[owner][key] = value
    try:
        sections = {name: SECTIONS[name](**routed[name]) for name in SECTIONS}
    except ValidationError as exc:
        raise ConfigurationError(str(exc)) from exc
    return ExperimentConfig(**sections)


def load_experiment_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, str]] = None,
) -> ExperimentConfig:
    """Read a ``key = value`` file, apply overrides, validate."""
    values: Dict[str, Optional[str]] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"config file not found: {path}")
        values.update(dotenv_values(path))
        logger.info(f"📄 Loaded {len(values)} config keys from {path}")
    if overrides:
        values.update(overrides)
    return build_experiment_config(values)


def dump_experiment_config(config: ExperimentConfig, path: Union[str, Path]) -> Path:
    """Write the resolved config back out in the same ``key = value`` format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    merged: Dict[str, object] = {}
    for name in SECTIONS:
        for key, value in getattr(config, name).model_dump().items():
            merged.setdefault(key, value)
    lines = []
    for key, value in merged.items():
        if value is None:
            continue
        if isinstance(value, bool):
            rendered = str(value).lower()
        elif isinstance(value, float):
            rendered = repr(value)
        else:
            rendered = str(value)
        lines.append(f"{key} = {rendered}")
    path.write_text("\n".join(lines) + "\n")
    return path


def configure_logging(settings: Optional[Settings] = None) -> None:
    """Console logging plus an optional log file."""
    settings = settings or get_settings()
    handlers: list = [logging.StreamHandler()]
    if settings.log_file:
        handlers.append(logging.FileHandler(settings.log_file))
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
        force=True,
    )
    logging.getLogger("uvicorn.access").setLevel(logging.WARNING)
