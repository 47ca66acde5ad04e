from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Numerical defaults loaded from environment variables or a .env file."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
    )

    # ── Application ──────────────────────────────────────
    log_level: str = "INFO"
    output_dir: str = "out"

    # ── Parisi grid ──────────────────────────────────────
    grid_points: int = 4001
    quad_nodes: int = 64
    grid_half_width: float | None = None  # auto: 10 + 6·sqrt(ξ'(1))
    grid_tail_tol: float = 1e-10

    # ── Monte Carlo ──────────────────────────────────────
    mc_paths: int = 100_000
    mc_dt: float = 5e-4
    mc_seed: int = 0
    mc_antithetic: bool = True
    mc_chunk_size: int = 20_000

    # ── Optimizers ───────────────────────────────────────
    simplex_stall_iterations: int = 200
    simplex_max_iterations: int = 4000
    multistart: int = 8
    newton_tol: float = 1e-10
    newton_max_iterations: int = 60

    # ── Field sampling ───────────────────────────────────
    max_tensor_entries: int = 20_000_000

    # ── Verification ─────────────────────────────────────
    residual_tol: float = 1e-3
    se_multiplier: float = 3.0


@lru_cache
def get_settings() -> Settings:
    return Settings()
