from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Numerical defaults only. Model parameters come from flags, --params or a preset.
    model_config = SettingsConfigDict(
        env_prefix="ROBUST_BANDIT_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    grid_size: int = 999
    solver_tol: float = 1e-10
    solver_max_iter: int = 10_000

    sim_paths: int = 10_000
    sim_dt: float = 1e-3
    sim_horizon: float = 30.0
    sim_seed: int = 20240611
    sim_chunk_size: int = 2048
    sim_workers: int = 1

    two_period_mu_grid: int = 1001
    two_period_quad_nodes: int = 64

    surplus_grid: int = 10_001
    log_level: str = "INFO"


_settings: Optional[Settings] = None


def get_settings() -> Settings:
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings
