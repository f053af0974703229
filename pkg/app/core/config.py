"""
Configuration constants for the dispersive BVP toolkit.
"""
from typing import List

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Solver and verification settings with optional environment overrides."""

    model_config = SettingsConfigDict(env_prefix="DISPERSIVE_", env_file=".env", extra="ignore")

    # Discretization
    GRID_N: int = 201
    MMS_GRID_N: int = 41  # coarsest grid of a refinement study
    ACCURACY_P: int = 4
    SUPPORTED_P: List[int] = [2, 4]
    MAX_L: int = 5
    MAX_N: int = 4001

    # Numerical thresholds
    SINGULAR_REDUCTION_TOL: float = 1e-10  # smallest LU pivot relative to max-abs entry
    PIVOT_RATIO_TOL: float = 1e-13
    NULLSPACE_RCOND: float = 1e-11

    # Lemma identity suite
    LEMMA_TOL: float = 1e-10
    LEMMA_SAMPLES: int = 200
    LEMMA_MAX_DEGREE: int = 20
    LEMMA_LENGTHS: List[float] = [0.5, 1.0, 3.141592653589793, 10.0]

    # A priori estimate contracts
    TOL_L2: float = 1e-3
    TOL_TRACE: float = 1e-2

    # Monte-Carlo sweep
    SEED: int = 0
    SWEEP_CASES: int = 100
    SWEEP_ORDERS: List[int] = [2, 3, 4]
    MARGIN_FLOOR: float = 0.1
    MARGIN_CEIL: float = 2.0
    UNIQUENESS_TOL: float = 1e-9
    SINGULAR_RATIO_TOL: float = 1e-12  # sigma_min/sigma_max of the equilibrated system

    # Convergence studies
    CONVERGENCE_ORDER_SLACK: float = 0.5
    EXACT_REGIME_TOL: float = 1e-6
    ROUNDOFF_FLOOR: float = 1e-10  # errors below this times max|u| are rounding

    # Output
    OUT_DIR: str = "out"
    DATABASE_URL: str = "sqlite:///./dispersive_sweeps.db"


settings = Settings()
