"""
Application Configuration Management
Centralized simulator defaults using Pydantic Settings
"""
from pathlib import Path
from typing import Literal, Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Simulator defaults loaded from environment variables (prefix SQZ_)."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="SQZ_",
        case_sensitive=False,
        extra="ignore"
    )

    # Output / runtime
    output_dir: Path = Field(
        default=Path("runs"),
        description="Directory receiving CSV tables and the JSON manifest"
    )
    threads: int = Field(
        default=1,
        ge=1,
        description="Worker threads used to fan out grid experiments"
    )
    log_level: str = Field(
        default="INFO",
        description="Root log level for the rich log handler"
    )
    csv_precision: int = Field(
        default=17,
        ge=1,
        le=17,
        description="Significant digits written for every floating-point cell"
    )

    # Mean-field integration
    meanfield_t_final: float = Field(
        default=200.0,
        gt=0.0,
        description="Initial integration horizon (units of 1/omega_m) for steady extraction"
    )
    meanfield_dt: Optional[float] = Field(
        default=None,
        gt=0.0,
        description="Fixed RK4 step; None applies 0.5/max(|delta_c|, kappa, G, |Delta_a|)"
    )
    meanfield_max_extensions: int = Field(
        default=4,
        ge=0,
        description="How many times t_final is doubled when the tail is not yet steady"
    )
    meanfield_tail_tol: float = Field(
        default=1e-8,
        gt=0.0,
        description="Relative variation allowed over the last 10% of samples"
    )
    meanfield_residual_tol: float = Field(
        default=1e-6,
        gt=0.0,
        description="Maximum |d/dt| accepted at the steady point"
    )
    meanfield_divergence: float = Field(
        default=1e12,
        gt=0.0,
        description="Magnitude beyond which a trajectory is declared unstable"
    )
    meanfield_sample_every: int = Field(
        default=20,
        ge=1,
        description="Sampling stride of the cached steady-state integrations"
    )
    meanfield_fixed_point_tol: float = Field(
        default=1e-6,
        gt=0.0,
        description="Relative gap to the algebraic fixed point above which a warning is logged"
    )

    # Master equation
    truncation_effective: tuple[int, int] = Field(
        default=(14, 8),
        description="Fock truncation (b, c) of the effective two-mode model"
    )
    truncation_full: tuple[int, int, int] = Field(
        default=(4, 10, 4),
        description="Fock truncation (a, b, c) of the three-mode models"
    )
    me_dt_effective: float = Field(
        default=0.01,
        gt=0.0,
        description="RK4 step for the effective master equation"
    )
    me_propagator: Literal["exact", "rk4"] = Field(
        default="exact",
        description="exact: matrix exponentials of the Liouvillian; rk4: fixed-step RK4"
    )
    me_dt_full: Optional[float] = Field(
        default=None,
        gt=0.0,
        description="RK4 step for three-mode models; None applies 0.05/max(|Delta_c|, ...)"
    )
    me_dt_time_dependent: float = Field(
        default=0.02,
        gt=0.0,
        description="Step of the fourth-order exponential scheme for the mean-field driven model"
    )
    me_ringdown_tol: float = Field(
        default=1e-6,
        gt=0.0,
        lt=1.0,
        description="Residual cavity ringing, exp(-kappa t), at which the driven fluctuation dynamics start"
    )
    me_t_final_effective: float = Field(default=500.0, gt=0.0)
    me_t_final_full: float = Field(default=100.0, gt=0.0)
    me_convergence_drift: float = Field(
        default=1e-4,
        gt=0.0,
        description="Relative drift over the final 10% of samples that counts as steady"
    )
    guard_population_tol: float = Field(
        default=1e-4,
        gt=0.0,
        description="Allowed population of the top two Fock levels of any mode"
    )
    hermiticity_tol: float = Field(default=1e-12, gt=0.0)
    trace_tol: float = Field(default=1e-10, gt=0.0)
    positivity_tol: float = Field(default=1e-10, gt=0.0)
    physicality_abort_tol: float = Field(
        default=1e-6,
        gt=0.0,
        description="Mid-run defect (trace, hermiticity, negative eigenvalue) that aborts an evolution"
    )

    # Covariance matrix
    cm_dt: Optional[float] = Field(
        default=None,
        gt=0.0,
        description="RK4 step for covariance propagation; None applies the stiffness rule"
    )
    cm_t_final: float = Field(default=100.0, gt=0.0)
    lyapunov_residual_tol: float = Field(default=1e-10, gt=0.0)
    symplectic_tol: float = Field(default=1e-8, gt=0.0)

    @field_validator("output_dir")
    @classmethod
    def validate_path(cls, v: Path) -> Path:
        """Ensure paths are Path objects."""
        if isinstance(v, str):
            return Path(v)
        return v

    @field_validator("truncation_effective", "truncation_full")
    @classmethod
    def validate_truncation(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        if any(n < 2 for n in v):
            raise ValueError("every mode needs at least 2 Fock levels")
        return v


# Global settings instance
settings = Settings()
