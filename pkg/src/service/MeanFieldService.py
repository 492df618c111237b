"""
Classical mean values of the driven hybrid cavity.

Two formulations of the same dynamics are integrated:
  - "abc":  complex amplitudes <a>, <b>, <c>
  - "qpac": mirror position/momentum <q>, <p> plus <a>, <c>
Both start from zero (empty cavity, mirror at rest) and are stored in the
common (a, b, c) representation with b = (q + i p)/sqrt(2).
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Literal, Optional

import numpy as np
from scipy.optimize import brentq, root

from src.config import settings
from src.exceptions import DomainError, InterpolationRangeError, NotSteadyError
from src.model.SystemParameters import PhysicalParams
from src.model.TimeSeries import TimeSeries
from src.service.Integrators import adaptive_integrate, rk4_integrate, step_count

logger = logging.getLogger(__name__)

Formulation = Literal["abc", "qpac"]
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class MeanFieldState:
    """One sample of the mean values at dimensionless time t."""

    t: float
    a: complex
    b: complex
    c: complex

    @property
    def q(self) -> float:
        return SQRT2 * self.b.real

    @property
    def p(self) -> float:
        return SQRT2 * self.b.imag


def stiffness_dt(p: PhysicalParams, factor: float = 0.5) -> float:
    """factor / fastest rate of the three-mode dynamics."""
    fastest = max(abs(p.delta_c), p.kappa, abs(p.G), abs(p.Delta_a), p.omega_m_prime, p.omega_m)
    return factor / fastest


def abc_rhs(p: PhysicalParams) -> Callable[[float, np.ndarray], np.ndarray]:
    """d/dt of y = [<a>, <b>, <c>]."""
    E = p.resolved_E
    cav = p.kappa + 1j * p.delta_c
    mech = p.gamma_m + 1j * p.omega_m_prime
    atom = p.gamma_a + 1j * p.Delta_a
    g, G, eta = p.g0_prime, p.G, p.eta

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        a, b, c = y
        return np.array([
            -cav * a - 1j * G * c + 1j * g * a * (b + b.conjugate()) - 1j * E,
            -mech * b - 2j * eta * b.conjugate() + 1j * g * (a * a.conjugate()).real,
            -atom * c - 1j * G * a,
        ])

    return rhs


def qpac_rhs(p: PhysicalParams) -> Callable[[float, np.ndarray], np.ndarray]:
    """d/dt of y = [<q>, <p>, <a>, <c>]; q and p are carried as complex with zero imaginary part."""
    E = p.resolved_E
    cav = p.kappa + 1j * p.delta_c
    atom = p.gamma_a + 1j * p.Delta_a
    w, stiff, g0, G = p.omega_m, p.omega_m + 4.0 * p.eta, p.g0, p.G

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        q, mom, a, c = y
        return np.array([
            w * mom,
            -stiff * q - p.gamma_m * mom + g0 * (a * a.conjugate()).real,
            -cav * a + 1j * g0 * a * q - 1j * G * c - 1j * E,
            -atom * c - 1j * G * a,
        ])

    return rhs


def _to_native(formulation: Formulation, s: MeanFieldState) -> np.ndarray:
    if formulation == "abc":
        return np.array([s.a, s.b, s.c], dtype=complex)
    return np.array([s.q, s.p, s.a, s.c], dtype=complex)


def _from_native(formulation: Formulation, t: float, y: np.ndarray) -> MeanFieldState:
    if formulation == "abc":
        return MeanFieldState(t, complex(y[0]), complex(y[1]), complex(y[2]))
    return MeanFieldState(t, complex(y[2]), complex(y[0].real, y[1].real) / SQRT2, complex(y[3]))


def _rhs_for(formulation: Formulation, p: PhysicalParams):
    if formulation == "abc":
        return abc_rhs(p)
    if formulation == "qpac":
        return qpac_rhs(p)
    raise DomainError(f"unknown mean-field formulation '{formulation}'")


@dataclass(frozen=True)
class MeanFieldTrajectory:
    """
    Sampled mean values; complex arrays share the time grid t.

    `at` is called at every step of a time-dependent master equation, so the
    real and imaginary parts are split once here and a uniform grid is
    indexed directly instead of searched.
    """

    t: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    params: PhysicalParams
    formulation: Formulation = "abc"
    _parts: np.ndarray = field(init=False, repr=False, compare=False)
    _step: Optional[float] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        parts = np.stack([self.a.real, self.a.imag, self.b.real, self.b.imag, self.c.real, self.c.imag])
        object.__setattr__(self, "_parts", np.ascontiguousarray(parts))
        step = None
        if len(self.t) > 1:
            gaps = np.diff(self.t)
            h = (self.t[-1] - self.t[0]) / (len(self.t) - 1)
            if h > 0 and np.max(np.abs(gaps - h)) <= 1e-9 * h:
                step = float(h)
        object.__setattr__(self, "_step", step)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def q(self) -> np.ndarray:
        return SQRT2 * self.b.real

    @property
    def p(self) -> np.ndarray:
        return SQRT2 * self.b.imag

    def state(self, i: int) -> MeanFieldState:
        return MeanFieldState(float(self.t[i]), complex(self.a[i]), complex(self.b[i]), complex(self.c[i]))

    @property
    def final(self) -> MeanFieldState:
        return self.state(-1)

    def at(self, t: float) -> MeanFieldState:
        """Piecewise-linear interpolation of the stored samples."""
        span = self.t[-1] - self.t[0]
        slack = 1e-9 * max(1.0, span)
        if t < self.t[0] - slack or t > self.t[-1] + slack:
            raise InterpolationRangeError(
                f"t = {t:.6g} outside trajectory [{self.t[0]:.6g}, {self.t[-1]:.6g}]"
            )
        t = min(max(t, self.t[0]), self.t[-1])
        last = len(self.t) - 1
        if last == 0:
            return self.state(0)
        if self._step is not None:
            i = min(int((t - self.t[0]) / self._step), last - 1)
        else:
            i = min(max(int(np.searchsorted(self.t, t, side="right")) - 1, 0), last - 1)
        t0, t1 = self.t[i], self.t[i + 1]
        w = (t - t0) / (t1 - t0)
        v = self._parts[:, i] * (1.0 - w) + self._parts[:, i + 1] * w
        return MeanFieldState(t, complex(v[0], v[1]), complex(v[2], v[3]), complex(v[4], v[5]))

    def extend(self, other: "MeanFieldTrajectory") -> "MeanFieldTrajectory":
        """Append a continuation whose first sample repeats this trajectory's last."""
        return MeanFieldTrajectory(
            np.concatenate([self.t, other.t[1:]]),
            np.concatenate([self.a, other.a[1:]]),
            np.concatenate([self.b, other.b[1:]]),
            np.concatenate([self.c, other.c[1:]]),
            self.params,
            self.formulation,
        )

    def to_series(self) -> TimeSeries:
        if self.formulation == "qpac":
            columns = {"q": self.q, "p": self.p, "a": self.a, "c": self.c}
        else:
            columns = {"a": self.a, "b": self.b, "c": self.c}
        return TimeSeries(self.t, columns, {"formulation": self.formulation})


def _integrate(
    formulation: Formulation,
    p: PhysicalParams,
    t_final: Optional[float],
    dt: Optional[float],
    initial: Optional[MeanFieldState],
    sample_every: int,
    method: str,
) -> MeanFieldTrajectory:
    t_final = t_final if t_final is not None else settings.meanfield_t_final
    dt = dt or settings.meanfield_dt or stiffness_dt(p)
    start = initial or MeanFieldState(0.0, 0j, 0j, 0j)
    y0 = _to_native(formulation, start)
    rhs = _rhs_for(formulation, p)
    n, h = step_count(start.t, t_final, dt)
    n_samples = n // sample_every + 2

    logger.debug("mean field %s: %d RK4 steps of %.3g to t=%.6g", formulation, n, h, t_final)

    if method == "adaptive":
        t_eval = start.t + h * np.arange(0, n + 1, sample_every)
        if t_eval[-1] < t_final:
            t_eval = np.append(t_eval, t_final)
        ts, ys = adaptive_integrate(rhs, y0, t_eval)
        return _trajectory(ts, ys, p, formulation)
    if method != "rk4":
        raise DomainError(f"unknown integrator '{method}'")

    t_buf = np.empty(n_samples)
    y_buf = np.empty((n_samples, len(y0)), dtype=complex)
    count = 0

    def record(t: float, y: np.ndarray) -> None:
        nonlocal count
        t_buf[count] = t
        y_buf[count] = y
        count += 1

    rk4_integrate(rhs, y0, start.t, t_final, dt, sample_every, record, settings.meanfield_divergence)
    return _trajectory(t_buf[:count], y_buf[:count], p, formulation)


def _trajectory(t: np.ndarray, ys: np.ndarray, p: PhysicalParams, formulation: Formulation) -> MeanFieldTrajectory:
    """Samples in native variables -> (a, b, c) arrays."""
    if formulation == "abc":
        a, b, c = ys[:, 0], ys[:, 1], ys[:, 2]
    else:
        a, c = ys[:, 2], ys[:, 3]
        b = (ys[:, 0].real + 1j * ys[:, 1].real) / SQRT2
    return MeanFieldTrajectory(np.array(t), np.array(a), np.array(b), np.array(c), p, formulation)


def integrate_meanfield_abc(
    p: PhysicalParams,
    t_final: Optional[float] = None,
    dt: Optional[float] = None,
    initial: Optional[MeanFieldState] = None,
    sample_every: int = 1,
    method: str = "rk4",
) -> MeanFieldTrajectory:
    """
    Integrate the complex-amplitude mean-field equations from rest.

    Parameters:
    ----------
    p : PhysicalParams
        System constants
    t_final : float, optional
        End time in units of 1/omega_m (settings.meanfield_t_final by default)
    dt : float, optional
        RK4 step; defaults to 0.5/max(|delta_c|, kappa, G, |Delta_a|, ...)
    initial : MeanFieldState, optional
        Continue from this state instead of the zero state
    sample_every : int
        Keep every n-th step
    method : str
        "rk4" (reference) or "adaptive" (DOP853 cross-check)

    Raises:
    ------
    InstabilityError
        when any amplitude exceeds settings.meanfield_divergence
    """
    return _integrate("abc", p, t_final, dt, initial, sample_every, method)


def integrate_meanfield_qpac(
    p: PhysicalParams,
    t_final: Optional[float] = None,
    dt: Optional[float] = None,
    initial: Optional[MeanFieldState] = None,
    sample_every: int = 1,
    method: str = "rk4",
) -> MeanFieldTrajectory:
    """Same as integrate_meanfield_abc for the position/momentum formulation."""
    return _integrate("qpac", p, t_final, dt, initial, sample_every, method)


@dataclass(frozen=True)
class SteadyMeanField:
    """Accepted steady point with its residual and Re/|Im| dominance ratios."""

    state: MeanFieldState
    residual: float
    ratio_checks: dict[str, float] = field(default_factory=dict)
    tail_variation: float = 0.0
    formulation: Formulation = "abc"

    @property
    def a_s(self) -> float:
        return abs(self.state.a)

    @property
    def b_s(self) -> float:
        return abs(self.state.b)

    @property
    def q_s(self) -> float:
        return abs(self.state.q)

    @property
    def c_s(self) -> float:
        return abs(self.state.c)

    def provenance(self) -> dict[str, object]:
        return {
            "formulation": self.formulation,
            "a_s": self.a_s,
            "b_s": self.b_s,
            "q_s": self.q_s,
            "residual": self.residual,
            "tail_variation": self.tail_variation,
            "ratio_checks": dict(self.ratio_checks),
        }


def _dominance(z: complex) -> float:
    return abs(z.real) / abs(z.imag) if z.imag != 0 else math.inf


def _ratio_checks(s: MeanFieldState, formulation: Formulation) -> dict[str, float]:
    if formulation == "qpac":
        return {"a": _dominance(s.a), "q": math.inf}
    return {"a": _dominance(s.a), "b": _dominance(s.b)}


def residual(p: PhysicalParams, s: MeanFieldState, formulation: Formulation = "abc") -> float:
    """max |d/dt| of the mean-field equations at s."""
    rhs = _rhs_for(formulation, p)
    return float(np.max(np.abs(rhs(s.t, _to_native(formulation, s)))))


def _polish(p: PhysicalParams, s: MeanFieldState, formulation: Formulation) -> MeanFieldState:
    """Newton polish of an (almost) stationary point on the real view of the state."""
    rhs = _rhs_for(formulation, p)
    z0 = _to_native(formulation, s)
    if formulation == "qpac":
        # q and p are real; keep them so
        def real_f(x):
            z = np.array([x[0], x[1], x[2] + 1j * x[3], x[4] + 1j * x[5]])
            f = rhs(s.t, z)
            return np.array([f[0].real, f[1].real, f[2].real, f[2].imag, f[3].real, f[3].imag])

        x0 = np.array([z0[0].real, z0[1].real, z0[2].real, z0[2].imag, z0[3].real, z0[3].imag])
        sol = root(real_f, x0, method="hybr", tol=1e-14)
        x = sol.x
        z = np.array([x[0], x[1], x[2] + 1j * x[3], x[4] + 1j * x[5]])
    else:
        def real_f(x):
            return np.asarray(rhs(s.t, x.view(np.complex128)), dtype=np.complex128).view(np.float64)

        sol = root(real_f, z0.view(np.float64), method="hybr", tol=1e-14)
        z = sol.x.view(np.complex128)
    return _from_native(formulation, s.t, z)


def steady_state(
    series: MeanFieldTrajectory,
    tail_tol: Optional[float] = None,
    residual_tol: Optional[float] = None,
) -> SteadyMeanField:
    """
    Accept the end of a trajectory as the steady state.

    The tail (last 10% of samples) must vary by less than tail_tol relative to
    the final magnitudes. The final sample is then polished by a Newton solve
    and accepted when max |d/dt| < residual_tol.

    Raises:
    ------
    NotSteadyError
        tail still moving or polished residual too large; extend t_final
    """
    tail_tol = tail_tol if tail_tol is not None else settings.meanfield_tail_tol
    residual_tol = residual_tol if residual_tol is not None else settings.meanfield_residual_tol
    p, formulation = series.params, series.formulation

    start = min(len(series) - 1, int(np.floor(len(series) * 0.9)))
    variation = 0.0
    for z in (series.a, series.b, series.c):
        ref = max(abs(z[-1]), 1.0)
        variation = max(variation, float(np.max(np.abs(z[start:] - z[-1]))) / ref)
    if variation > tail_tol:
        raise NotSteadyError(
            f"mean-field tail varies by {variation:.3g} (> {tail_tol:.3g}) at t = {series.t[-1]:.6g}",
            variation,
        )

    last = series.final
    res = residual(p, last, formulation)
    if res > 0.0:
        polished = _polish(p, last, formulation)
        polished_res = residual(p, polished, formulation)
        drift = max(abs(polished.a - last.a) / max(abs(last.a), 1.0),
                    abs(polished.b - last.b) / max(abs(last.b), 1.0))
        if polished_res < res and drift <= max(1e3 * tail_tol, 1e-6):
            last, res = polished, polished_res
    if res > residual_tol:
        raise NotSteadyError(f"steady residual {res:.3g} exceeds {residual_tol:.3g}", variation)

    return SteadyMeanField(last, res, _ratio_checks(last, formulation), variation, formulation)


def solve_steady_mean_field(
    p: PhysicalParams,
    formulation: Formulation = "abc",
    t_final: Optional[float] = None,
    dt: Optional[float] = None,
    max_extensions: Optional[int] = None,
    sample_every: int = 1,
) -> tuple[MeanFieldTrajectory, SteadyMeanField]:
    """Integrate from rest, doubling the horizon until steady_state accepts the tail."""
    max_extensions = settings.meanfield_max_extensions if max_extensions is None else max_extensions
    horizon = t_final if t_final is not None else settings.meanfield_t_final
    integrate = integrate_meanfield_abc if formulation == "abc" else integrate_meanfield_qpac
    traj = integrate(p, horizon, dt, sample_every=sample_every)
    for extension in range(max_extensions + 1):
        try:
            steady = steady_state(traj)
            logger.info("mean field steady at t=%.6g: |a|=%.6g |b|=%.6g residual=%.2e",
                        traj.t[-1], steady.a_s, steady.b_s, steady.residual)
            return traj, steady
        except NotSteadyError as e:
            if extension == max_extensions:
                raise
            logger.info("mean field not steady (%s); extending to t=%.6g", e, 2 * traj.t[-1])
            more = integrate(p, 2 * traj.t[-1], dt, initial=traj.final, sample_every=sample_every)
            traj = traj.extend(more)
    raise AssertionError("unreachable")


@lru_cache(maxsize=512)
def steady_mean_field(p: PhysicalParams, formulation: Formulation = "abc") -> SteadyMeanField:
    """
    Steady amplitudes for the effective-parameter formulas, taken from
    long-time integration from rest and cached per parameter set.

    The algebraic fixed point is solved alongside; a disagreement beyond
    settings.meanfield_fixed_point_tol means the integration settled on
    another branch and is logged.

    Raises:
    ------
    NotSteadyError
        the tail never settled within the allowed extensions
    """
    _, steady = solve_steady_mean_field(p, formulation, sample_every=settings.meanfield_sample_every)
    fixed = fixed_point_mean_field(p, formulation)
    gap = max(abs(steady.a_s - fixed.a_s) / max(fixed.a_s, 1.0), abs(steady.b_s - fixed.b_s) / max(fixed.b_s, 1.0))
    if gap > settings.meanfield_fixed_point_tol:
        logger.warning("integrated mean field differs from the fixed point by %.3g (relative)", gap)
    return steady


def fixed_point_mean_field(p: PhysicalParams, formulation: Formulation = "abc") -> SteadyMeanField:
    """
    Algebraic steady state of the mean-field equations.

    Eliminating <c> and the mirror leaves one real equation n |chi(n)|^2 = E^2
    for the intracavity photon number n = |<a>|^2, monotone for delta_c <= 0.
    """
    E = p.resolved_E
    w, g = p.omega_m, p.g0_prime
    if formulation == "abc":
        # stationary b: x = Re b, Im b = gamma_m x / omega_m
        stiffness = w + 4.0 * p.eta + p.gamma_m ** 2 / w
    else:
        stiffness = w + 4.0 * p.eta
    if stiffness <= 0:
        raise DomainError("omega_m + 4 eta must be positive for a stationary mirror")
    atom = p.gamma_a + 1j * p.Delta_a
    base = p.kappa + 1j * p.delta_c + p.G ** 2 / atom

    def shift(n: float) -> float:
        # 2 g0' Re b, equal to g0 q
        return 2.0 * g * g * n / stiffness

    def chi(n: float) -> complex:
        return base - 1j * shift(n)

    def f(n: float) -> float:
        return n * abs(chi(n)) ** 2 - E * E

    if E == 0.0:
        n = 0.0
    else:
        kappa_r = base.real
        if kappa_r <= 0:
            raise DomainError("total cavity damping must be positive")
        n = brentq(f, 0.0, E * E / kappa_r ** 2, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)

    a = -1j * E / chi(n)
    x = g * n / stiffness
    b = complex(x, p.gamma_m * x / w) if formulation == "abc" else complex(x, 0.0)
    c = -1j * p.G * a / atom
    state = MeanFieldState(math.inf, a, b, c)
    res = residual(p, MeanFieldState(0.0, a, b, c), formulation)
    return SteadyMeanField(state, res, _ratio_checks(state, formulation), 0.0, formulation)
