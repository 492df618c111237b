"""
Parameter sweeps: thread-pool fan-out and the covariance-track sweeps.

Every grid point is independent. Rows come back sorted by grid coordinates,
never by completion order, and a failing point becomes a row with
stable/converged flags instead of aborting the sweep.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Literal, Optional, Sequence

from src.config import settings
from src.exceptions import (
    InstabilityError,
    ParametricInstabilityError,
    SqueezingSimError,
    StabilityError,
)
from src.model.SystemParameters import DerivedParams, PhysicalParams, effective_params
from src.model.TimeSeries import write_table
from src.service.CovarianceService import (
    analytic_variance,
    diffusion_effective,
    diffusion_full,
    diffusion_reduced,
    drift_effective,
    drift_full,
    lyapunov_steady,
    reduced_drift,
)
from src.service.MeanFieldService import steady_mean_field

logger = logging.getLogger(__name__)

CmMethod = Literal["fullCM", "reducedCM", "analytic", "effectiveCM"]
CM_METHODS: tuple[str, ...] = ("fullCM", "reducedCM", "analytic", "effectiveCM")
UNSTABLE_ERRORS = (StabilityError, InstabilityError, ParametricInstabilityError)


@dataclass
class SweepRow:
    coords: dict[str, float]
    value: float
    converged: bool = True
    stable: bool = True
    message: str = ""
    method: str = ""
    extras: dict[str, object] = field(default_factory=dict)

    @property
    def sort_key(self) -> tuple:
        return tuple(self.coords.values()) + (self.method,)


def fan_out(
    points: Sequence[dict[str, float]],
    evaluate: Callable[[dict[str, float]], SweepRow],
    threads: Optional[int] = None,
) -> list[SweepRow]:
    """Evaluate every point, in parallel when threads > 1, and sort rows by coordinates."""
    threads = threads or settings.threads

    def guarded(point: dict[str, float]) -> SweepRow:
        try:
            return evaluate(point)
        except (SqueezingSimError, ValueError) as e:
            logger.warning("sweep point %s failed: %s", point, e)
            coords = {k: v for k, v in point.items() if k != "method"}
            return SweepRow(coords, math.nan, converged=False,
                            stable=not isinstance(e, UNSTABLE_ERRORS), message=str(e),
                            method=str(point.get("method", "")))

    if threads > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(guarded, points))
    else:
        rows = [guarded(point) for point in points]
    return sorted(rows, key=lambda r: r.sort_key)


def write_sweep(path: Path, rows: Iterable[SweepRow], value_name: str = "variance",
                precision: Optional[int] = None) -> Path:
    """CSV: coordinates, [method], value, stable, converged, message, extras."""
    rows = list(rows)
    coords = list(rows[0].coords) if rows else []
    with_method = any(r.method for r in rows)
    extra_names = sorted({k for r in rows for k in r.extras})
    header = coords + (["method"] if with_method else []) + [value_name, "stable", "converged"] + extra_names + ["message"]
    body = []
    for r in rows:
        line = [r.coords.get(c) for c in coords]
        if with_method:
            line.append(r.method)
        line += [r.value, r.stable, r.converged]
        line += [r.extras.get(k) for k in extra_names]
        line.append(r.message)
        body.append(line)
    return write_table(path, header, body, precision or settings.csv_precision)


def effective_cm_variance(d: DerivedParams, n_m: float) -> float:
    """Exact Gaussian steady <dX^2> of the effective master equation."""
    return float(lyapunov_steady(drift_effective(d), diffusion_effective(d, n_m)).V[0, 0])


def cm_variance(p: PhysicalParams, n_m: float, method: str) -> tuple[float, DerivedParams]:
    """Steady mirror-position variance of one covariance-track method at PhysicalParams p."""
    if method not in CM_METHODS:
        raise ValueError(f"unknown covariance method '{method}'")
    steady = steady_mean_field(p)
    d = effective_params(p, steady.a_s, steady.b_s)
    if method == "fullCM":
        state = steady_mean_field(p, "qpac").state
        V = lyapunov_steady(drift_full(p, state), diffusion_full(p, n_m)).V
        return float(V[0, 0]), d
    if method == "reducedCM":
        return float(lyapunov_steady(reduced_drift(d), diffusion_reduced(d, n_m)).V[0, 0]), d
    if method == "analytic":
        return analytic_variance(d), d
    return effective_cm_variance(d, n_m), d


def eta_sweep(
    base: PhysicalParams,
    etas: Sequence[float],
    n_m: float = 0.0,
    methods: Sequence[str] = ("fullCM", "reducedCM", "analytic"),
    threads: Optional[int] = None,
) -> list[SweepRow]:
    """Steady <dq^2> versus eta in long format (one row per eta and method)."""
    points = [{"eta": float(eta), "method": m} for eta in etas for m in methods]

    def evaluate(point) -> SweepRow:
        p = base.with_overrides(eta=point["eta"])
        value, d = cm_variance(p, n_m, point["method"])
        return SweepRow({"eta": point["eta"]}, value, method=point["method"],
                        extras={"eta_prime": d.eta_prime})

    return fan_out(points, evaluate, threads)


def coupling_grid_cm(
    base: PhysicalParams,
    kappas: Sequence[float],
    Gs: Sequence[float],
    n_m: float = 0.0,
    method: str = "effectiveCM",
    threads: Optional[int] = None,
) -> list[SweepRow]:
    """Steady variance on a (kappa, G) grid; every point re-derives the mean field."""
    points = [{"kappa": float(k), "G": float(g), "n_m": n_m} for k in kappas for g in Gs]

    def evaluate(point) -> SweepRow:
        p = base.with_overrides(kappa=point["kappa"], G=point["G"])
        value, d = cm_variance(p, n_m, method)
        return SweepRow(dict(point), value, extras={"Delta_eff": d.Delta_eff, "G_eff": d.G_eff})

    return fan_out(points, evaluate, threads)


def detuning_axis_cm(
    d: DerivedParams,
    values: Sequence[float],
    n_m: float = 0.0,
    threads: Optional[int] = None,
) -> list[SweepRow]:
    """Effective-model steady variance with Delta_eff overridden point by point."""
    points = [{"Delta_eff": float(v), "n_m": n_m} for v in values]

    def evaluate(point) -> SweepRow:
        return SweepRow(dict(point), effective_cm_variance(d.with_delta_eff(point["Delta_eff"]), n_m))

    return fan_out(points, evaluate, threads)


def parameter_sweep(
    base: PhysicalParams,
    name: str,
    values: Sequence[float],
    n_m: float = 0.0,
    method: str = "reducedCM",
    threads: Optional[int] = None,
) -> list[SweepRow]:
    """Any PhysicalParams field against a covariance-track steady variance."""
    if name not in PhysicalParams.model_fields:
        raise ValueError(f"'{name}' is not a physical parameter")
    points = [{name: float(v)} for v in values]

    def evaluate(point) -> SweepRow:
        value, _ = cm_variance(base.with_overrides(**point), n_m, method)
        return SweepRow(dict(point), value, method=method)

    return fan_out(points, evaluate, threads)
