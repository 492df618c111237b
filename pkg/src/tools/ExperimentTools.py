"""
Experiment registry: one function per reproducible figure run.

Each experiment takes an ExperimentContext (the validated RunConfig, resolved
PhysicalParams, output directory, worker count), writes its CSV tables and
returns an ExperimentOutput with convergence flags and a summary. Experiments
are registered with the @experiment decorator and looked up by stable id.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from src.config import settings
from src.exceptions import ConfigSchemaError, SqueezingSimError, UnknownExperimentError
from src.model.SystemParameters import DerivedParams, PhysicalParams, effective_params, optimal_detuning
from src.model.TimeSeries import TimeSeries, write_table
from src.runner.RunConfig import IntegratorOverrides, RunConfig
from src.service.CovarianceService import (
    TrajectoryDrift,
    analytic_variance,
    diffusion_full,
    diffusion_reduced,
    drift_full,
    evolve_covariance,
    initial_covariance,
    lyapunov_steady,
    reduced_drift,
)
from src.service.LindbladService import (
    CouplingGrid,
    DetuningAxis,
    MasterEquationResult,
    dissipators_for,
    effective_spec,
    evolve_master_equation,
    full_linear_spec,
    initial_state,
    steady_variance_sweep,
    time_dependent_spec,
)
from src.service.MeanFieldService import (
    SteadyMeanField,
    fixed_point_mean_field,
    integrate_meanfield_abc,
    integrate_meanfield_qpac,
    solve_steady_mean_field,
    steady_mean_field,
    stiffness_dt,
)
from src.service.SweepService import (
    CM_METHODS,
    SweepRow,
    coupling_grid_cm,
    detuning_axis_cm,
    effective_cm_variance,
    eta_sweep,
    parameter_sweep,
    write_sweep,
)

logger = logging.getLogger(__name__)

# rows kept in mean-field trajectory tables
MAX_TRAJECTORY_ROWS = 4000
SQUEEZING_LIMIT = 0.5
# largest relative gap accepted between the full and the cavity-eliminated models
REDUCTION_AGREEMENT = 0.05


@dataclass
class ExperimentContext:
    config: RunConfig
    params: PhysicalParams
    out_dir: Path
    threads: int
    _steady: Optional[SteadyMeanField] = field(default=None, repr=False)

    @property
    def integrator(self) -> IntegratorOverrides:
        return self.config.integrator

    def n_m_values(self, default: Sequence[float]) -> list[float]:
        """Configured thermal occupations, or the experiment's own default when none were given."""
        if "n_m" in self.config.model_fields_set:
            return list(self.config.n_m)
        return list(default)

    def steady(self) -> SteadyMeanField:
        if self._steady is None:
            self._steady = steady_mean_field(self.params)
        return self._steady

    def derived(self) -> DerivedParams:
        s = self.steady()
        return effective_params(self.params, s.a_s, s.b_s)

    def truncation(self, n_modes: int, default: Sequence[int]) -> tuple[int, ...]:
        """Fock truncation for an n_modes run; (a, b, c) overrides also serve two-mode (b, c) runs."""
        t = self.config.truncation
        if t is None:
            return tuple(default)
        if len(t) == n_modes:
            return tuple(t)
        if n_modes == 2:
            return tuple(t[1:])
        return (settings.truncation_full[0], *t)

    def path(self, name: str) -> Path:
        return self.out_dir / f"{self.config.experiment}_{name}.csv"

    def write_series(self, name: str, series: TimeSeries) -> Path:
        return series.write_csv(self.path(name), settings.csv_precision)

    def write_rows(self, name: str, rows: Iterable[SweepRow], value_name: str = "variance") -> Path:
        return write_sweep(self.path(name), rows, value_name, settings.csv_precision)


@dataclass
class ExperimentOutput:
    files: list[Path] = field(default_factory=list)
    converged: bool = True
    summary: dict[str, object] = field(default_factory=dict)
    derived: Optional[DerivedParams] = None
    diagnostics: dict[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentSpec:
    id: str
    description: str
    func: Callable[[ExperimentContext], ExperimentOutput]


EXPERIMENTS: dict[str, ExperimentSpec] = {}


def experiment(id: str, description: str):
    """Register the decorated function under a stable experiment id."""

    def register(func: Callable[[ExperimentContext], ExperimentOutput]):
        if id in EXPERIMENTS:
            raise ValueError(f"experiment '{id}' registered twice")
        EXPERIMENTS[id] = ExperimentSpec(id, description, func)
        return func

    return register


def get_experiment(id: str) -> ExperimentSpec:
    try:
        return EXPERIMENTS[id]
    except KeyError:
        raise UnknownExperimentError(
            f"unknown experiment '{id}' (available: {', '.join(EXPERIMENTS)})"
        ) from None


def _relative(x: float, reference: float) -> float:
    return abs(x - reference) / abs(reference) if reference else math.inf


def _me_ok(result: MasterEquationResult) -> bool:
    return result.converged and result.truncation_ok and result.physical


def cooling_levels(n_m: float) -> int:
    """Mechanical Fock levels needed to hold a thermal(n_m) start."""
    return min(40, max(settings.truncation_effective[0], int(10 * (n_m + 1))))


def _meanfield_run(ctx: ExperimentContext, formulation: str) -> ExperimentOutput:
    p = ctx.params
    t_final = ctx.integrator.t_final or settings.meanfield_t_final
    dt = ctx.integrator.dt or settings.meanfield_dt or stiffness_dt(p)
    sample_every = max(1, int(t_final / dt) // MAX_TRAJECTORY_ROWS)
    traj, steady = solve_steady_mean_field(p, formulation, t_final, dt, sample_every=sample_every)
    files = [ctx.write_series("meanfield", traj.to_series())]

    fixed = fixed_point_mean_field(p, formulation)
    summary: dict[str, object] = {
        "t_final": float(traj.t[-1]),
        "a_s": steady.a_s,
        "b_s": steady.b_s,
        "q_s": steady.state.q,
        "c_s": steady.c_s,
        "residual": steady.residual,
        "dominance_ratio": dict(steady.ratio_checks),
        "fixed_point_deviation": _relative(steady.a_s, fixed.a_s),
    }

    if ctx.integrator.method == "adaptive":
        integrate = integrate_meanfield_abc if formulation == "abc" else integrate_meanfield_qpac
        check = integrate(p, float(traj.t[-1]), dt, sample_every=sample_every, method="adaptive")
        files.append(ctx.write_series("meanfield_adaptive", check.to_series()))
        summary["adaptive_deviation"] = _relative(abs(check.final.a), steady.a_s)

    return ExperimentOutput(
        files=files,
        converged=True,
        summary=summary,
        derived=effective_params(p, steady.a_s, steady.b_s),
        diagnostics=steady.provenance(),
    )


@experiment("fig2", "Mean-field dynamics of <a>, <b>, <c> from rest (complex-amplitude form)")
def meanFieldDynamics(ctx: ExperimentContext) -> ExperimentOutput:
    return _meanfield_run(ctx, "abc")


@experiment("fig8", "Mean-field dynamics of <q>, <p>, <a>, <c> from rest (position/momentum form)")
def positionMomentumDynamics(ctx: ExperimentContext) -> ExperimentOutput:
    out = _meanfield_run(ctx, "qpac")
    abc = steady_mean_field(ctx.params, "abc")
    out.summary["q_vs_complex_form"] = _relative(float(out.summary["q_s"]), abc.state.q)
    return out


@experiment("fig3", "<dX^2>(t) of the full linearized and the effective master equation")
def varianceDynamics(ctx: ExperimentContext) -> ExperimentOutput:
    p, d = ctx.params, ctx.derived()
    n_m = ctx.n_m_values([0.0])[0]
    specs = {
        "full_linear": full_linear_spec(p, d, ctx.truncation(3, settings.truncation_full)),
        "effective": effective_spec(d, ctx.truncation(2, settings.truncation_effective)),
    }
    out = ExperimentOutput(derived=d)
    results: dict[str, MasterEquationResult] = {}
    for name, h in specs.items():
        logger.info("fig3: %s master equation on %s", name, h.space.mode_dims)
        result = evolve_master_equation(h, dissipators_for(h, n_m), initial_state(h.space, n_m),
                                        ctx.integrator.t_final, ctx.integrator.dt)
        results[name] = result
        out.files.append(ctx.write_series(name, result.series))
        out.diagnostics[name] = result.diagnostics()

    full, eff = results["full_linear"].steady_var_x, results["effective"].steady_var_x
    out.converged = all(_me_ok(r) for r in results.values())
    out.summary = {
        "n_m": n_m,
        "steady_full_linear": full,
        "steady_effective": eff,
        "relative_difference": _relative(eff, full),
        "squeezed": eff < SQUEEZING_LIMIT,
    }
    return out


@experiment("fig4", "Steady <dX^2> on a (kappa, G) grid (method 'me' or 'cm')")
def couplingGrid(ctx: ExperimentContext) -> ExperimentOutput:
    kappas = ctx.config.axis("kappa", [1.0, 2.0, 3.0, 4.0, 5.0])
    Gs = ctx.config.axis("G", [2.0, 4.0, 6.0, 8.0, 10.0])
    n_m = ctx.n_m_values([0.0])[0]
    method = ctx.config.method or "cm"
    if method == "me":
        rows = steady_variance_sweep(CouplingGrid(tuple(kappas), tuple(Gs)), ctx.params, n_m,
                                     ctx.truncation(2, settings.truncation_effective),
                                     ctx.integrator.t_final, ctx.integrator.dt, ctx.threads)
    else:
        rows = coupling_grid_cm(ctx.params, kappas, Gs, n_m, threads=ctx.threads)

    squeezed = [r for r in rows if r.converged and r.value < SQUEEZING_LIMIT]
    finite = [r for r in rows if math.isfinite(r.value)]
    best = min(finite, key=lambda r: r.value) if finite else None
    return ExperimentOutput(
        files=[ctx.write_rows("grid", rows)],
        converged=all(r.converged for r in rows),
        summary={
            "method": method,
            "points": len(rows),
            "unstable": sum(not r.stable for r in rows),
            "squeezed": len(squeezed),
            "squeezed_above_omega_m": sum(r.coords["kappa"] > ctx.params.omega_m for r in squeezed),
            "minimum": best.value if best else math.nan,
            "minimum_at": dict(best.coords) if best else {},
        },
        derived=ctx.derived(),
    )


def _minima(rows: list[SweepRow], n_ms: Sequence[float]) -> dict[float, tuple[float, float]]:
    """n_m -> (Delta_eff, variance) at the smallest finite variance."""
    out = {}
    for n_m in n_ms:
        curve = [r for r in rows if r.coords["n_m"] == n_m and math.isfinite(r.value)]
        if curve:
            best = min(curve, key=lambda r: r.value)
            out[n_m] = (best.coords["Delta_eff"], best.value)
    return out


def _nondecreasing_in_n_m(rows: list[SweepRow], n_ms: Sequence[float], tol: float = 1e-9) -> bool:
    table = {(r.coords["Delta_eff"], r.coords["n_m"]): r.value for r in rows}
    ordered = sorted(n_ms)
    for (delta, n_m), value in table.items():
        i = ordered.index(n_m)
        if i + 1 < len(ordered):
            hotter = table.get((delta, ordered[i + 1]))
            if hotter is not None and math.isfinite(value) and math.isfinite(hotter) and hotter < value - tol:
                return False
    return True


@experiment("fig5", "Steady <dX^2> versus Delta_eff for several n_m (method 'me' or 'cm')")
def detuningSweep(ctx: ExperimentContext) -> ExperimentOutput:
    d = ctx.derived()
    values = ctx.config.axis("Delta_eff", [float(v) for v in np.linspace(0.9, 1.9, 21)])
    n_ms = ctx.n_m_values([0.0, 1.0, 3.0])
    method = ctx.config.method or "cm"
    rows: list[SweepRow] = []
    for n_m in n_ms:
        if method == "me":
            rows += steady_variance_sweep(DetuningAxis(tuple(values)), d, n_m,
                                          ctx.truncation(2, settings.truncation_effective),
                                          ctx.integrator.t_final, ctx.integrator.dt, ctx.threads)
        else:
            rows += detuning_axis_cm(d, values, n_m, ctx.threads)

    target = optimal_detuning(d)
    minima = _minima(rows, n_ms)
    return ExperimentOutput(
        files=[ctx.write_rows("detuning", rows)],
        converged=all(r.converged for r in rows),
        summary={
            "method": method,
            "optimal_detuning": target,
            "minimum_at": {f"{n:g}": delta for n, (delta, _) in minima.items()},
            "minimum_variance": {f"{n:g}": value for n, (_, value) in minima.items()},
            "minimum_near_optimum": all(abs(delta - target) <= 0.1 for delta, _ in minima.values()),
            "nondecreasing_in_n_m": _nondecreasing_in_n_m(rows, n_ms),
        },
        derived=d,
    )


@experiment("fig7", "Cooling: <b^dag b>(t) of the effective model from thermal(n_m)")
def cooling(ctx: ExperimentContext) -> ExperimentOutput:
    delta = ctx.config.axis("Delta_eff", [1.4])[0]
    d = ctx.derived().with_delta_eff(delta)
    out = ExperimentOutput(derived=d)
    phonons: dict[str, float] = {}
    for n_m in ctx.n_m_values([1.0, 2.0, 3.0]):
        dims = ctx.truncation(2, (cooling_levels(n_m), settings.truncation_effective[1]))
        h = effective_spec(d, dims)
        logger.info("fig7: n_m=%g on %s", n_m, dims)
        result = evolve_master_equation(h, dissipators_for(h, n_m), initial_state(h.space, n_m),
                                        ctx.integrator.t_final, ctx.integrator.dt)
        out.files.append(ctx.write_series(f"nm{n_m:g}", result.series))
        out.diagnostics[f"{n_m:g}"] = result.diagnostics()
        out.converged = out.converged and _me_ok(result)
        phonons[f"{n_m:g}"] = result.steady["n_b"]
    out.summary = {
        "Delta_eff": delta,
        "steady_n_b": phonons,
        "cooled_below_one": all(n < 1.0 for n in phonons.values()),
    }
    return out


@experiment("fig9", "<dq^2>(t) of the full 6x6 and the reduced 4x4 covariance matrix")
def covarianceDynamics(ctx: ExperimentContext) -> ExperimentOutput:
    p, d = ctx.params, ctx.derived()
    n_m = ctx.n_m_values([0.0])[0]
    mean_field = steady_mean_field(p, "qpac").state
    tracks = {
        "full": (drift_full(p, mean_field), diffusion_full(p, n_m), initial_covariance(n_m, 3)),
        "reduced": (reduced_drift(d), diffusion_reduced(d, n_m), initial_covariance(n_m, 2)),
    }
    out = ExperimentOutput(derived=d)
    steady: dict[str, float] = {}
    for name, (A, D, V0) in tracks.items():
        result = evolve_covariance(A, D, V0, ctx.integrator.t_final, ctx.integrator.dt)
        out.files.append(ctx.write_series(name, result.series))
        out.diagnostics[name] = result.diagnostics()
        out.converged = out.converged and result.converged and result.physical
        steady[name] = result.steady_var_q
        steady[f"{name}_lyapunov"] = lyapunov_steady(A, D).var_q
    # the reduced model sits a few percent below the full one at the preset
    gap = _relative(steady["reduced_lyapunov"], steady["full_lyapunov"])
    out.summary = {
        "n_m": n_m,
        **{f"steady_{k}": v for k, v in steady.items()},
        "analytic": analytic_variance(d),
        "relative_difference": gap,
        "agreement_tolerance": REDUCTION_AGREEMENT,
        "reduction_agrees": gap <= REDUCTION_AGREEMENT,
    }
    return out


@experiment("fig10", "Steady <dq^2> versus eta: full CM, reduced CM and the closed form")
def etaSweep(ctx: ExperimentContext) -> ExperimentOutput:
    etas = ctx.config.axis("eta", [float(v) for v in np.linspace(0.0, 0.4, 9)])
    n_m = ctx.n_m_values([0.0])[0]
    methods = ("fullCM", "reducedCM", "analytic")
    rows = eta_sweep(ctx.params, etas, n_m, methods, ctx.threads)

    by_eta: dict[float, dict[str, SweepRow]] = {}
    for r in rows:
        by_eta.setdefault(r.coords["eta"], {})[r.method] = r
    header = ["eta", "eta_prime", *methods, "stable", "converged"]
    body = []
    for eta in sorted(by_eta):
        cells = by_eta[eta]
        first = next(iter(cells.values()))
        body.append([
            eta,
            first.extras.get("eta_prime"),
            *(cells[m].value if m in cells else math.nan for m in methods),
            all(c.stable for c in cells.values()),
            all(c.converged for c in cells.values()),
        ])
    path = write_table(ctx.path("eta"), header, body, settings.csv_precision)

    deviation = {
        f"{eta:g}": abs(cells["analytic"].value - cells["fullCM"].value)
        for eta, cells in sorted(by_eta.items())
        if "analytic" in cells and "fullCM" in cells
    }
    return ExperimentOutput(
        files=[path],
        converged=all(r.converged for r in rows),
        summary={"n_m": n_m, "analytic_minus_full": deviation},
        derived=ctx.derived(),
    )


@experiment("fig11", "Steady <dq^2> of ME and CM, with and without the approximations")
def approachEquivalence(ctx: ExperimentContext) -> ExperimentOutput:
    p, d = ctx.params, ctx.derived()
    n_m = ctx.n_m_values([0.0])[0]
    with_me = ctx.config.method != "cm"
    dims_full = ctx.truncation(3, settings.truncation_full)
    horizon = ctx.integrator.t_final or 2.0 * settings.me_t_final_full
    mf_dt = settings.meanfield_dt or stiffness_dt(p)
    trajectory = integrate_meanfield_abc(p, horizon, mf_dt)

    out = ExperimentOutput(derived=d)
    values: dict[str, float] = {}
    flags: dict[str, bool] = {}

    def failed(name: str, error: SqueezingSimError) -> None:
        logger.warning("fig11: %s track failed: %s", name, error)
        values[name], flags[name] = math.nan, False
        out.diagnostics[name] = {"converged": False, "error": str(error)}

    cm_steady = steady_mean_field(p, "qpac").state
    cm_approx = lyapunov_steady(drift_full(p, cm_steady), diffusion_full(p, n_m))
    values["cm_approx"], flags["cm_approx"] = cm_approx.var_q, True

    try:
        cm_exact = evolve_covariance(TrajectoryDrift(p, trajectory), diffusion_full(p, n_m),
                                     initial_covariance(n_m, 3), horizon, ctx.integrator.dt)
        out.files.append(ctx.write_series("cm_exact", cm_exact.series))
        out.diagnostics["cm_exact"] = cm_exact.diagnostics()
        values["cm_exact"] = cm_exact.steady_var_q
        flags["cm_exact"] = cm_exact.converged and cm_exact.physical
    except SqueezingSimError as e:
        failed("cm_exact", e)

    values["reduced_cm"], flags["reduced_cm"] = lyapunov_steady(reduced_drift(d), diffusion_reduced(d, n_m)).var_q, True
    values["effective_cm"], flags["effective_cm"] = effective_cm_variance(d, n_m), True

    if with_me:
        # fluctuations follow the driven mean field once the cavity has rung down
        t_ring = min(math.log(1.0 / settings.me_ringdown_tol) / p.kappa, 0.5 * horizon)
        runs = {
            "me_approx": (full_linear_spec(p, d, dims_full), ctx.integrator.t_final, 0.0, True),
            "me_exact": (time_dependent_spec(p, d, trajectory, dims_full), horizon, t_ring, False),
        }
        for name, (h, t_final, t_start, stop) in runs.items():
            logger.info("fig11: %s master equation from t=%.3g", name, t_start)
            try:
                result = evolve_master_equation(h, dissipators_for(h, n_m), initial_state(h.space, n_m),
                                                t_final, ctx.integrator.dt, stop_when_steady=stop,
                                                t_start=t_start)
            except SqueezingSimError as e:
                failed(name, e)
                continue
            out.files.append(ctx.write_series(name, result.series))
            out.diagnostics[name] = result.diagnostics()
            values[name] = result.steady_var_x
            flags[name] = _me_ok(result) if stop else result.truncation_ok and result.physical

    table = [[name, values[name], flags[name]] for name in values]
    out.files.append(write_table(ctx.path("steady"), ["track", "variance", "converged"], table,
                                 settings.csv_precision))
    reference = values["reduced_cm"]
    spread = max((_relative(v, reference) for v in values.values() if math.isfinite(v)), default=math.nan)
    out.converged = all(flags.values())
    out.summary = {
        "n_m": n_m,
        "steady": values,
        "unconverged_tracks": sorted(name for name, ok in flags.items() if not ok),
        "max_relative_spread": spread,
        "equivalent": spread < REDUCTION_AGREEMENT and out.converged,
    }
    return out


@experiment("sweep-custom", "Any PhysicalParams field against a covariance-track steady variance")
def customSweep(ctx: ExperimentContext) -> ExperimentOutput:
    name = ctx.config.sweep_param
    if name is None:
        raise ConfigSchemaError("sweep-custom needs sweep_param", "sweep_param")
    if name not in PhysicalParams.model_fields:
        raise ConfigSchemaError(f"'{name}' is not a physical parameter", "sweep_param")
    if name not in ctx.config.grid:
        raise ConfigSchemaError(f"sweep-custom needs a grid for '{name}'", f"grid.{name}")
    method = ctx.config.sweep_method
    if method not in CM_METHODS:
        raise ConfigSchemaError(f"unknown method '{method}' (use one of {', '.join(CM_METHODS)})",
                                "sweep_method")
    n_m = ctx.n_m_values([0.0])[0]
    rows = parameter_sweep(ctx.params, name, ctx.config.grid[name].resolve(), n_m, method, ctx.threads)
    finite = [r for r in rows if math.isfinite(r.value)]
    return ExperimentOutput(
        files=[ctx.write_rows(name, rows)],
        converged=all(r.converged for r in rows),
        summary={
            "parameter": name,
            "method": method,
            "points": len(rows),
            "squeezed": sum(r.value < SQUEEZING_LIMIT for r in finite),
            "minimum": min((r.value for r in finite), default=math.nan),
        },
        derived=ctx.derived(),
    )
