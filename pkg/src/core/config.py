"""
Application configuration settings.
Loads environment variables and provides typed configuration.
"""
from pathlib import Path
from typing import Literal

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

BASE_DIR = Path(__file__).resolve().parents[2]
ENV_PATH = BASE_DIR / ".env"


class Settings(BaseSettings):
    # Application
    APP_NAME: str = Field("lframes")
    APP_VERSION: str = Field("1.0.0")
    ENVIRONMENT: Literal["development", "ci", "production"] = Field("development")

    # Logging
    LOG_LEVEL: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = Field("INFO")
    LOG_FORMAT: str = Field("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    LOG_TO_FILE: bool = Field(False)
    LOG_DIR: Path = Field(BASE_DIR / "logs")

    # Numerics
    DEFAULT_SEED: int = Field(0, ge=0)
    ENVELOPE_P: int = Field(5, ge=1)
    PARALLEL_EPS: float = Field(1e-8, gt=0)
    BN_EPS: float = Field(1e-5, gt=0)
    DIST_EPS: float = Field(1e-9, gt=0)
    TIE_RTOL: float = Field(1e-9, gt=0)
    RADIAL_K: int = Field(16, ge=2)
    STORAGE_DTYPE: Literal["float64", "float32"] = Field("float64")

    # Training
    GRAD_CLIP: float = Field(0.5, gt=0)

    @field_validator("LOG_LEVEL", mode="before")
    @classmethod
    def normalize_level(cls, v):
        if isinstance(v, str):
            return v.upper()
        return v

    model_config = SettingsConfigDict(
        env_file=ENV_PATH,
        case_sensitive=True,
        extra="ignore",
    )


settings = Settings()
