"""Application configuration"""
from pathlib import Path
from typing import Any, Dict, Literal, Optional

import yaml
from pydantic import ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from posegan.core.exceptions import ConfigError
from posegan.schemas.training import TrainConfig


class Settings(BaseSettings):
    """Process-wide settings, read from the environment and ``.env``"""

    # Application
    APP_NAME: str = "posegan"
    DEVICE: Literal["cpu", "cuda", "auto"] = "cpu"
    TORCH_NUM_THREADS: int = 0  # 0 keeps torch's own default
    DEFAULT_SEED: int = 0

    # Data pipeline
    PREPROCESS_WORKERS: int = 4
    PREFETCH_DEPTH: int = 4

    # Artifacts
    CHECKPOINT_FILENAME: str = "checkpoint.pt"
    DIAGNOSTIC_CHECKPOINT_FILENAME: str = "diagnostic.pt"
    TRAINING_LOG_FILENAME: str = "training_log.csv"

    # Numerical tolerances
    POSE_TOLERANCE: float = 1e-9
    GROUND_TRUTH_TOLERANCE: float = 1e-6  # KITTI pose files carry ~6 significant digits
    QUATERNION_WARN_TOLERANCE: float = 1e-3

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="POSEGAN_",
        case_sensitive=True,
        extra="ignore",
    )

    @field_validator("LOG_LEVEL", mode="before")
    @classmethod
    def normalize_log_level(cls, v):
        if isinstance(v, str):
            return v.strip().upper()
        return v


settings = Settings()


def load_config_file(path) -> Dict[str, Any]:
    """Read a YAML or JSON run configuration (JSON is valid YAML)"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}", path=str(path))
    try:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Cannot parse {path}: {e}", path=str(path))
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping at top level", path=str(path))
    return data


def resolve_train_config(path=None, overrides: Optional[Dict[str, Any]] = None) -> TrainConfig:
    """Defaults < config file < explicit overrides (``None`` values are ignored)"""
    data = load_config_file(path) if path is not None else {}
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return TrainConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(
            f"Invalid training configuration: {e.error_count()} error(s)",
            errors=[{"loc": list(err["loc"]), "msg": err["msg"]} for err in e.errors()],
        )
