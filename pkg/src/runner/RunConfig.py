"""
Per-run configuration: which experiment, on which parameters, with which numerics.

A run is a pure function of its RunConfig. Files are TOML (preferred) or JSON;
all numbers are in units of omega_m except P_mW and omega_m_rad_s.
"""
import json
import tomllib
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.exceptions import ConfigSchemaError
from src.model.SystemParameters import PRESETS, PhysicalParams


class GridAxis(BaseModel):
    """Evenly spaced values start..stop (inclusive), or an explicit list."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    start: Optional[float] = None
    stop: Optional[float] = None
    count: int = Field(default=1, ge=1)
    values: Optional[list[float]] = None

    def resolve(self) -> list[float]:
        if self.values is not None:
            return list(self.values)
        if self.start is None:
            raise ValueError("grid axis needs either values or start")
        if self.count == 1 or self.stop is None:
            return [self.start]
        return [float(v) for v in np.linspace(self.start, self.stop, self.count)]


class IntegratorOverrides(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    dt: Optional[float] = Field(default=None, gt=0.0)
    t_final: Optional[float] = Field(default=None, gt=0.0)
    method: Literal["rk4", "adaptive"] = "rk4"


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    experiment: str = Field(..., description="experiment id, see `list-experiments`")
    preset: str = Field(default="fig2", description="named PhysicalParams preset")
    params: dict[str, float] = Field(default_factory=dict, description="PhysicalParams field overrides")
    grid: dict[str, GridAxis] = Field(default_factory=dict)
    n_m: list[float] = Field(default_factory=lambda: [0.0])
    method: Optional[Literal["me", "cm"]] = Field(default=None, description="fig4/fig5 resolution")
    sweep_param: Optional[str] = Field(default=None, description="PhysicalParams field swept by sweep-custom")
    sweep_method: str = Field(default="reducedCM")
    truncation: Optional[list[int]] = None
    integrator: IntegratorOverrides = Field(default_factory=IntegratorOverrides)
    output_dir: Optional[Path] = None
    threads: Optional[int] = Field(default=None, ge=1)

    @field_validator("preset")
    @classmethod
    def validate_preset(cls, v: str) -> str:
        if v not in PRESETS:
            raise ValueError(f"unknown preset '{v}' (available: {', '.join(PRESETS)})")
        return v

    @field_validator("params")
    @classmethod
    def validate_params(cls, v: dict[str, float]) -> dict[str, float]:
        unknown = set(v) - set(PhysicalParams.model_fields)
        if unknown:
            raise ValueError(f"unknown parameters: {', '.join(sorted(unknown))}")
        return v

    @field_validator("n_m")
    @classmethod
    def validate_n_m(cls, v: list[float]) -> list[float]:
        if not v or any(n < 0 for n in v):
            raise ValueError("n_m needs at least one value, all >= 0")
        return v

    @field_validator("truncation")
    @classmethod
    def validate_truncation(cls, v: Optional[list[int]]) -> Optional[list[int]]:
        if v is not None and (len(v) not in (2, 3) or any(n < 2 for n in v)):
            raise ValueError("truncation is (b, c) or (a, b, c), every level >= 2")
        return v

    def physical_params(self) -> PhysicalParams:
        """Preset with overrides applied."""
        try:
            return PRESETS[self.preset].with_overrides(**self.params)
        except ValidationError as e:
            raise _schema_error(e, prefix="params") from e

    def axis(self, name: str, default: list[float]) -> list[float]:
        return self.grid[name].resolve() if name in self.grid else default

    def with_cli_overrides(self, **changes) -> "RunConfig":
        """Apply command-line flags (None values are ignored)."""
        data = self.model_dump(exclude_unset=True)
        integrator = dict(data.get("integrator", {}))
        for key in ("dt", "t_final"):
            if changes.get(key) is not None:
                integrator[key] = changes[key]
        data["integrator"] = integrator
        for key in ("output_dir", "threads", "truncation"):
            if changes.get(key) is not None:
                data[key] = changes[key]
        return validate_run_config(data)

    def fingerprint(self) -> dict:
        return json.loads(self.model_dump_json())


def _schema_error(e: ValidationError, prefix: str = "") -> ConfigSchemaError:
    first = e.errors()[0]
    path = ".".join(str(part) for part in first["loc"])
    if prefix:
        path = f"{prefix}.{path}" if path else prefix
    return ConfigSchemaError(first["msg"], path)


def validate_run_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise _schema_error(e) from e


def load_run_config(path: Path) -> RunConfig:
    """
    Read a RunConfig from TOML or JSON.

    Raises:
    ------
    ConfigSchemaError
        unreadable file, unsupported suffix or schema violation (with the dotted field path)
    """
    path = Path(path)
    try:
        if path.suffix == ".toml":
            with open(path, "rb") as f:
                data = tomllib.load(f)
        elif path.suffix == ".json":
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        else:
            raise ConfigSchemaError(f"unsupported config format '{path.suffix}' (use .toml or .json)")
    except (OSError, tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigSchemaError(f"cannot read {path}: {e}") from e
    return validate_run_config(data)
