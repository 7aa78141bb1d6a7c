import os
from typing import Optional

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Application settings
    PROJECT_NAME: str = "ridge-loocv"
    VERSION: str = "0.3.0"
    SPEC_VERSION: str = "1.0"

    # Numerical tolerances
    TOL_ABS: float = 1e-10
    TOL_REL: float = 1e-8
    RANK_TOL: float = 1e-12  # smallest/largest singular value
    LEVERAGE_TOL: float = 1e-12  # minimum allowed 1 - Q_n
    FLAT_SPECTRUM_TOL: float = 1e-8

    # Default lambda grid, scaled by the mean squared singular value
    GRID_POINTS: int = 400
    GRID_LOW_FACTOR: float = 1e-6
    GRID_HIGH_FACTOR: float = 1e6

    # Quasiconvexity classifier
    STRICT_RISE_REL: float = 1e-9  # times tail_limit
    ROOT_RTOL: float = 1e-10
    HESS_FLAT_TOL: float = 1e-12
    GRID_DENSIFY_FACTOR: int = 4
    GRID_RETRIES: int = 2
    NEAR_THRESHOLD_FACTOR: float = 10.0
    DENSE_ORACLE_POINTS: int = 100_000

    # Experiments
    DEFAULT_SEED: int = int(os.getenv("RIDGE_LOOCV_SEED", "20240229"))
    THREADS: int = int(os.getenv("RIDGE_LOOCV_THREADS", "1"))

    # Logging
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    LOG_FILE: Optional[str] = None
    LOG_JSON: bool = os.getenv("LOG_JSON", "false").lower() == "true"

    @field_validator(
        "TOL_ABS", "TOL_REL", "RANK_TOL", "LEVERAGE_TOL", "FLAT_SPECTRUM_TOL",
        "GRID_LOW_FACTOR", "GRID_HIGH_FACTOR", "STRICT_RISE_REL", "ROOT_RTOL",
        "HESS_FLAT_TOL",
    )
    @classmethod
    def positive_tolerance(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("tolerances and grid factors must be positive")
        return v

    @field_validator("GRID_POINTS")
    @classmethod
    def enough_grid_points(cls, v: int) -> int:
        if v < 3:
            raise ValueError("GRID_POINTS must be at least 3")
        return v

    @field_validator("THREADS", "GRID_DENSIFY_FACTOR")
    @classmethod
    def at_least_one(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be at least 1")
        return v

    model_config = SettingsConfigDict(
        case_sensitive=True,
        env_file=".env",
        extra="ignore",
    )


settings = Settings()
