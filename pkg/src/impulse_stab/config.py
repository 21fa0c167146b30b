"""Configuration settings for the impulse stabilization toolkit."""

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Solver and runtime configuration settings."""

    # Riccati value iteration
    RICCATI_TOL: float = 1e-10
    MAX_PERIODS: int = 10000
    DIVERGENCE_CAP: float = 1e12
    GROWTH_WINDOW: int = 20

    # Rank decisions (relative to the largest singular value)
    RANK_THRESHOLD: float = 1e-10

    # Observability searches
    K_MAX: int = 8
    MULTISTART: int = 32
    SEED: int = 0
    SUFFICIENT_C_MIN: float = 1e-6
    SUFFICIENT_C_MAX: float = 1e10
    SUFFICIENT_GRID_PER_DECADE: int = 40
    STEERING_MU_FINAL: float = 1e-12
    MAX_BLOCKS: int = 400

    # Battery runner
    BATTERY_WORKERS: int = 4

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="IMPULSE_",
        case_sensitive=True,
        extra="ignore",
    )
