"""
Configuration module for adanns
Handles environment variables and toolkit-wide defaults
"""

import os
from typing import List

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


def _default_workers() -> int:
    return os.cpu_count() or 1


class Settings(BaseSettings):
    """Toolkit settings with environment variable support (ADANNS_*)"""

    # Application
    app_name: str = "adanns"
    app_version: str = "1.0.0"

    # Reproducibility / runtime
    seed: int = Field(default=0, ge=0)
    workers: int = Field(default_factory=_default_workers, ge=1)

    # Logging
    log_level: str = "INFO"

    # k-means
    kmeans_max_iters: int = Field(default=25, ge=1)
    kmeans_tol: float = Field(default=1e-4, ge=0.0)
    kmeans_init: str = "kmeans++"

    # Quantization (b is fixed at 8 bits per code)
    pq_bits: int = 8
    opq_iters: int = Field(default=20, ge=1)

    # Search
    shortlist_factor: int = Field(default=10, ge=1)
    distance_chunk_rows: int = Field(default=4096, ge=1)

    # Sweep grid ladder
    prefix_ladder: List[int] = [8, 16, 32, 64, 128, 256, 512, 1024, 2048]

    model_config = SettingsConfigDict(
        env_prefix="ADANNS_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )


# Global settings instance
settings = Settings()


def get_settings() -> Settings:
    """Fresh settings snapshot (re-reads the environment)"""
    return Settings()


# k-means configuration
KMEANS_CONFIG = {
    "max_iters": settings.kmeans_max_iters,
    "tol": settings.kmeans_tol,
    "init": settings.kmeans_init,
}

# Quantization configuration
QUANTIZATION_CONFIG = {
    "bits": settings.pq_bits,
    "codebook_size": 2 ** settings.pq_bits,
    "opq_iters": settings.opq_iters,
}

# Search configuration
SEARCH_CONFIG = {
    "shortlist_factor": settings.shortlist_factor,
    "chunk_rows": settings.distance_chunk_rows,
}

# Sweep configuration
SWEEP_CONFIG = {
    "prefix_ladder": settings.prefix_ladder,
    "workers": settings.workers,
}
