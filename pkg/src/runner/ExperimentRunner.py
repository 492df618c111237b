"""
Experiment orchestration: run a RunConfig, emit CSV tables and a JSON manifest,
and report the derived (effective) parameters of a configuration.
"""
import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
from rich.logging import RichHandler

from src.config import settings
from src.model.SystemParameters import (
    effective_params,
    optimal_detuning,
    sideband_report,
    transformed_coefficients,
    validity_report,
)
from src.runner.RunConfig import RunConfig
from src.service.MeanFieldService import fixed_point_mean_field, solve_steady_mean_field
from src.tools.ExperimentTools import ExperimentContext, get_experiment

logger = logging.getLogger(__name__)


def configure_logging(level: Optional[str] = None) -> None:
    """Route every module logger through one RichHandler."""
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
        force=True,
    )


def jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings 'inf', '-inf', 'nan'."""
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return jsonable(dataclasses.asdict(value))
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        return x if math.isfinite(x) else str(x)
    if isinstance(value, complex):
        return {"re": jsonable(value.real), "im": jsonable(value.imag)}
    return value if value is None or isinstance(value, str) else str(value)


@dataclass
class RunSummary:
    experiment: str
    files: list[Path]
    converged: bool
    summary: dict[str, object]
    manifest: Path
    wall_time: float
    diagnostics: dict[str, object] = field(default_factory=dict)


def run(config: RunConfig) -> RunSummary:
    """
    Execute one experiment and write its artifacts.

    Parameters:
    ----------
    config : RunConfig
        Validated run configuration

    Returns:
    -------
    RunSummary
        Written files (CSV tables plus `<experiment>_manifest.json`), the
        overall convergence flag and the experiment summary.

    Raises:
    ------
    UnknownExperimentError
        experiment id not registered
    ConfigSchemaError
        parameter overrides or experiment options fail validation
    """
    spec = get_experiment(config.experiment)
    params = config.physical_params()
    out_dir = Path(config.output_dir or settings.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = ExperimentContext(config, params, out_dir, config.threads or settings.threads)

    logger.info("running %s -> %s", spec.id, out_dir)
    start = time.perf_counter()
    output = spec.func(ctx)
    wall_time = time.perf_counter() - start
    logger.info("%s finished in %.1f s (converged=%s)", spec.id, wall_time, output.converged)

    manifest = {
        "experiment": spec.id,
        "description": spec.description,
        "config": config.fingerprint(),
        "params": {**params.model_dump(), "E_resolved": params.resolved_E},
        "derived": output.derived.as_dict() if output.derived else None,
        "converged": output.converged,
        "summary": output.summary,
        "diagnostics": output.diagnostics,
        "files": [f.name for f in output.files],
        "numerics": {
            "csv_precision": settings.csv_precision,
            "me_convergence_drift": settings.me_convergence_drift,
            "guard_population_tol": settings.guard_population_tol,
            "meanfield_tail_tol": settings.meanfield_tail_tol,
        },
        "wall_time_s": wall_time,
    }
    manifest_path = out_dir / f"{spec.id}_manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(jsonable(manifest), f, indent=2)

    return RunSummary(spec.id, output.files, output.converged, output.summary, manifest_path,
                      wall_time, output.diagnostics)


def derived_report(config: RunConfig) -> dict[str, Any]:
    """
    Effective parameters of the configured system with their provenance.

    The steady mean field comes from integration from rest (extended until the
    tail settles, then Newton-polished) and is cross-checked against the
    algebraic fixed point.

    Raises:
    ------
    NotSteadyError
        the mean field did not settle within the allowed extensions
    """
    p = config.physical_params()
    _, steady = solve_steady_mean_field(p, t_final=config.integrator.t_final, dt=config.integrator.dt)
    fixed = fixed_point_mean_field(p)
    d = effective_params(p, steady.a_s, steady.b_s)
    validity = validity_report(p, d)
    provenance = {
        **steady.provenance(),
        "fixed_point_a_s": fixed.a_s,
        "fixed_point_residual": fixed.residual,
        "fixed_point_deviation": abs(steady.a_s - fixed.a_s) / fixed.a_s if fixed.a_s else 0.0,
    }
    return jsonable({
        "preset": config.preset,
        "params": {**p.model_dump(), "E_resolved": p.resolved_E},
        "derived": d.as_dict(),
        "provenance": provenance,
        "optimal_detuning": optimal_detuning(d),
        "sideband": sideband_report(d),
        "squeezed_frame": transformed_coefficients(d, d.r),
        "validity": {**dataclasses.asdict(validity), "valid": validity.valid},
    })
