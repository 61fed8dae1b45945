"""
Process-wide settings read from the environment (prefix RBFH_).
"""
import os
from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="RBFH_")

    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    quad_tol: float = Field(default=1e-12, gt=0)
    log_level: str = "INFO"
    # Full SVD condition numbers instead of power iteration (n <= 300 only)
    exact_cond: bool = False
    output_dir: str = "results"


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return the cached settings instance."""
    return Settings()
