"""
Time integrators shared by the mean-field, master-equation and covariance tracks.

The fixed-step classical RK4 is the reference integrator for nonlinear and
matrix ODEs (deterministic, bit-stable); the adaptive DOP853 path is an
optional cross-check. Linear systems dy/dt = A(t) y with a large sparse
generator are propagated by matrix exponentials instead: exactly between
samples when A is constant, stepwise when it is not.
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from src.exceptions import InstabilityError

logger = logging.getLogger(__name__)

Rhs = Callable[[float, np.ndarray], np.ndarray]
# step_generators(t, h) -> [G_1, ..., G_m]; y(t + h) = exp(G_m) ... exp(G_1) y(t)
StepGenerators = Callable[[float, float], Sequence[Any]]
# on_sample(t, y) -> True stops the integration early
SampleHook = Callable[[float, np.ndarray], Optional[bool]]


@dataclass(frozen=True)
class IntegrationResult:
    t: float
    y: np.ndarray
    steps: int
    stopped_early: bool


def step_count(t0: float, t_final: float, dt: float) -> tuple[int, float]:
    """Number of steps and the step that lands exactly on t_final."""
    span = t_final - t0
    if span <= 0 or dt <= 0:
        raise ValueError("need t_final > t0 and dt > 0")
    n = max(1, math.ceil(span / dt - 1e-9))
    return n, span / n


def rk4_step(rhs: Rhs, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_finite(t: float, y: np.ndarray, divergence: Optional[float]) -> None:
    magnitude = float(np.max(np.abs(y), initial=0.0))
    if not math.isfinite(magnitude):
        raise InstabilityError("state became non-finite", t)
    if divergence is not None and magnitude > divergence:
        raise InstabilityError(f"state magnitude {magnitude:.3g} exceeded {divergence:.3g}", t)


def rk4_integrate(
    rhs: Rhs,
    y0: np.ndarray,
    t0: float,
    t_final: float,
    dt: float,
    sample_every: int = 1,
    on_sample: Optional[SampleHook] = None,
    divergence: Optional[float] = None,
) -> IntegrationResult:
    """
    Classical fixed-step RK4 from t0 to t_final.

    Parameters:
    ----------
    rhs : callable
        dy/dt = rhs(t, y), any array shape, real or complex
    y0 : np.ndarray
        Initial state (copied)
    t0, t_final : float
        Integration window; the last step lands exactly on t_final
    dt : float
        Requested step; shortened slightly so that an integer number of steps fits
    sample_every : int
        `on_sample` fires at t0, every `sample_every` steps, and at t_final
    on_sample : callable, optional
        Hook receiving (t, y); returning True stops the run
    divergence : float, optional
        max |y| beyond which InstabilityError is raised (checked at samples)
    """
    n, h = step_count(t0, t_final, dt)
    y = np.array(y0, copy=True)
    t = t0
    if on_sample is not None:
        _check_finite(t, y, divergence)
        if on_sample(t, y):
            return IntegrationResult(t, y, 0, True)
    for i in range(1, n + 1):
        y = rk4_step(rhs, t, y, h)
        t = t0 + i * h
        if i % sample_every == 0 or i == n:
            _check_finite(t, y, divergence)
            if on_sample is not None and on_sample(t, y):
                return IntegrationResult(t, y, i, True)
    return IntegrationResult(t, y, n, False)


def adaptive_integrate(
    rhs: Rhs,
    y0: np.ndarray,
    t_eval: np.ndarray,
    rtol: float = 1e-11,
    atol: float = 1e-12,
    method: str = "DOP853",
) -> tuple[np.ndarray, np.ndarray]:
    """Adaptive cross-check on a flat state vector; returns (t, samples[k, ...])."""
    shape = np.shape(y0)
    flat0 = np.ravel(y0)

    def flat_rhs(t, y):
        return np.ravel(rhs(t, y.reshape(shape)))

    sol = solve_ivp(flat_rhs, (t_eval[0], t_eval[-1]), flat0, method=method,
                    t_eval=t_eval, rtol=rtol, atol=atol)
    if not sol.success:
        raise InstabilityError(f"adaptive integration failed: {sol.message}", float(sol.t[-1]))
    logger.debug("adaptive %s used %d rhs evaluations", method, sol.nfev)
    return sol.t, sol.y.T.reshape((len(sol.t),) + shape)


def expm_integrate(
    generator: Any,
    y0: np.ndarray,
    t0: float,
    t_final: float,
    sample_dt: float,
    on_sample: Optional[SampleHook] = None,
    chunk: int = 20,
) -> IntegrationResult:
    """
    Exact propagation of dy/dt = A y for a constant (sparse) generator A.

    Samples fall on an even grid of roughly `sample_dt` ending at t_final;
    `chunk` samples at a time are produced by one expm_multiply call, so the
    norm estimation it performs is shared across the chunk. `on_sample` may
    modify the sample in place; the last sample of a chunk seeds the next.
    """
    n, h = step_count(t0, t_final, sample_dt)
    y = np.array(y0, dtype=complex, copy=True)
    t = t0
    if on_sample is not None:
        _check_finite(t, y, None)
        if on_sample(t, y):
            return IntegrationResult(t, y, 0, True)
    done = 0
    while done < n:
        k = min(chunk, n - done)
        block = expm_multiply(generator, y, start=0.0, stop=k * h, num=k + 1, endpoint=True)
        for j in range(1, k + 1):
            y = block[j]
            t = t0 + (done + j) * h
            _check_finite(t, y, None)
            if on_sample is not None and on_sample(t, y):
                return IntegrationResult(t, y, done + j, True)
        y = np.array(y, copy=True)
        done += k
    return IntegrationResult(t, y, n, False)


def exponential_integrate(
    step_generators: StepGenerators,
    y0: np.ndarray,
    t0: float,
    t_final: float,
    dt: float,
    sample_every: int = 1,
    on_sample: Optional[SampleHook] = None,
) -> IntegrationResult:
    """
    Fixed-step product of exponentials for dy/dt = A(t) y.

    Each step applies the generators returned by step_generators(t, h) in
    order; a pair of Gauss-node combinations gives a fourth-order scheme
    that needs no commutators. Sampling follows rk4_integrate.
    """
    n, h = step_count(t0, t_final, dt)
    y = np.array(y0, dtype=complex, copy=True)
    t = t0
    if on_sample is not None:
        _check_finite(t, y, None)
        if on_sample(t, y):
            return IntegrationResult(t, y, 0, True)
    for i in range(1, n + 1):
        for G in step_generators(t, h):
            y = expm_multiply(G, y)
        t = t0 + i * h
        if i % sample_every == 0 or i == n:
            _check_finite(t, y, None)
            if on_sample is not None and on_sample(t, y):
                return IntegrationResult(t, y, i, True)
    return IntegrationResult(t, y, n, False)
