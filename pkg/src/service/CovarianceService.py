"""
Covariance-matrix track for the Gaussian fluctuations.

Quadrature ordering is fixed:
  full (6x6):      [dq, dp, dx1, dy1, dx2, dy2]   (mirror, cavity, atoms)
  reduced (4x4):   [dq, dp, dx2, dy2]             (cavity eliminated)
  effective (4x4): [dq, dp, dx2, dy2]             (covariance form of the effective master equation)

V evolves as dV/dt = A V + V A^T + D and, for a Hurwitz drift, relaxes to
the unique solution of A V + V A^T = -D.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Union

import numpy as np

from src.config import settings
from src.exceptions import (
    DegenerateSystemError,
    DomainError,
    InvalidDimensionError,
    PhysicalityError,
    SingularParameterError,
    StabilityError,
)
from src.model.SystemParameters import DerivedParams, PhysicalParams, effective_params
from src.model.TimeSeries import TimeSeries
from src.service.Integrators import rk4_integrate
from src.service.MeanFieldService import (
    MeanFieldState,
    MeanFieldTrajectory,
    SteadyMeanField,
    qpac_rhs,
    stiffness_dt,
)

logger = logging.getLogger(__name__)

DriftForm = Literal["full", "reduced", "effective"]

# structurally nonzero entries
FULL_PATTERN = np.array([
    [0, 1, 0, 0, 0, 0],
    [1, 1, 1, 1, 0, 0],
    [1, 0, 1, 1, 0, 1],
    [1, 0, 1, 1, 1, 0],
    [0, 0, 0, 1, 1, 1],
    [0, 0, 1, 0, 1, 1],
], dtype=bool)

REDUCED_PATTERN = np.array([
    [0, 1, 0, 0],
    [1, 1, 1, 0],
    [0, 0, 1, 1],
    [1, 0, 1, 1],
], dtype=bool)

EFFECTIVE_PATTERN = np.array([
    [1, 1, 0, 0],
    [1, 1, 1, 0],
    [0, 0, 1, 1],
    [1, 0, 1, 1],
], dtype=bool)

PATTERNS = {"full": FULL_PATTERN, "reduced": REDUCED_PATTERN, "effective": EFFECTIVE_PATTERN}


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class DriftMatrix:
    entries: np.ndarray
    form: DriftForm
    t: Optional[float] = None

    def __post_init__(self):
        size = PATTERNS[self.form].shape[0]
        if self.entries.shape != (size, size):
            raise InvalidDimensionError(f"{self.form} drift must be {size}x{size}, got {self.entries.shape}")
        if not np.all(np.isfinite(self.entries)):
            raise DomainError("drift matrix has non-finite entries")
        object.__setattr__(self, "entries", _frozen(self.entries))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def matches_pattern(self) -> bool:
        """True when every structurally-zero entry is exactly zero."""
        return bool(np.all(self.entries[~PATTERNS[self.form]] == 0.0))


@dataclass(frozen=True)
class DiffusionMatrix:
    entries: np.ndarray

    def __post_init__(self):
        diag = np.diag(np.diag(self.entries))
        if not np.array_equal(diag, self.entries):
            raise DomainError("diffusion matrix must be diagonal")
        if np.any(np.diag(self.entries) < 0):
            raise DomainError("diffusion entries must be nonnegative")
        object.__setattr__(self, "entries", _frozen(self.entries))

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def symplectic_form(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


@dataclass(frozen=True)
class CovarianceState:
    V: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        n = self.V.shape[0]
        if self.V.shape != (n, n) or n % 2:
            raise InvalidDimensionError(f"covariance must be square with even size, got {self.V.shape}")
        object.__setattr__(self, "V", _frozen(self.V))

    @property
    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.V - self.V.T)))

    @property
    def physicality_margin(self) -> float:
        """Smallest eigenvalue of V + i Omega/2 (>= 0 for a physical state)."""
        return physicality_margin(self.V)

    @property
    def var_q(self) -> float:
        return float(self.V[0, 0])

    @property
    def var_p(self) -> float:
        return float(self.V[1, 1])

    def is_physical(self, tol: Optional[float] = None) -> bool:
        tol = settings.symplectic_tol if tol is None else tol
        return self.symmetry_defect <= 1e-12 * max(1.0, float(np.max(np.abs(self.V)))) and self.physicality_margin >= -tol


def physicality_margin(V: np.ndarray) -> float:
    omega = symplectic_form(V.shape[0] // 2)
    return float(np.linalg.eigvalsh(V + 0.5j * omega).min())


def drift_full(p: PhysicalParams, mf: MeanFieldState) -> DriftMatrix:
    """
    6x6 drift of the linearized fluctuations around the mean field mf.

    G0(t) = sqrt(2) g0 <a>, G_x = Re G0, G_y = Im G0, Delta_c(t) = delta_c - g0 <q>.
    """
    G0 = math.sqrt(2.0) * p.g0 * mf.a
    gx, gy = G0.real, G0.imag
    det = p.delta_c - p.g0 * mf.q
    A = np.array([
        [0.0, p.omega_m, 0.0, 0.0, 0.0, 0.0],
        [-(p.omega_m + 4.0 * p.eta), -p.gamma_m, gx, gy, 0.0, 0.0],
        [-gy, 0.0, -p.kappa, det, 0.0, p.G],
        [gx, 0.0, -det, -p.kappa, -p.G, 0.0],
        [0.0, 0.0, 0.0, p.G, -p.gamma_a, p.Delta_a],
        [0.0, 0.0, -p.G, 0.0, -p.Delta_a, -p.gamma_a],
    ])
    return DriftMatrix(A, "full", None if math.isinf(mf.t) else mf.t)


def reduced_drift(d: DerivedParams) -> DriftMatrix:
    """4x4 drift B of the cavity-eliminated dynamics built from the auxiliaries Delta_G, Omega_m, G_g."""
    B = np.array([
        [0.0, d.omega_m, 0.0, 0.0],
        [-d.Omega_m, -d.gamma_m, -d.G_g, 0.0],
        [0.0, 0.0, -d.gamma_a, d.Delta_G],
        [-d.G_g, 0.0, -d.Delta_G, -d.gamma_a],
    ])
    return DriftMatrix(B, "reduced")


def drift_reduced(p: PhysicalParams, s: SteadyMeanField) -> DriftMatrix:
    """
    Raises:
    ------
    SingularParameterError
        effective cavity detuning Delta_c = 0
    """
    return reduced_drift(effective_params(p, s.a_s, s.b_s))


def drift_effective(d: DerivedParams) -> DriftMatrix:
    """Covariance form of the effective master equation (Lindblad rates 2 gamma_m, 2 gamma_eff)."""
    B = np.array([
        [-d.gamma_m, d.omega_m, 0.0, 0.0],
        [-(d.omega_m + 4.0 * d.eta_prime), -d.gamma_m, -2.0 * d.G_eff, 0.0],
        [0.0, 0.0, -d.gamma_eff, d.Delta_eff],
        [-2.0 * d.G_eff, 0.0, -d.Delta_eff, -d.gamma_eff],
    ])
    return DriftMatrix(B, "effective")


def diffusion_full(p: PhysicalParams, n_m: float) -> DiffusionMatrix:
    thermal = p.gamma_m * (2.0 * n_m + 1.0)
    return DiffusionMatrix(np.diag([0.0, thermal, p.kappa, p.kappa, p.gamma_a, p.gamma_a]))


def diffusion_reduced(params: Union[PhysicalParams, DerivedParams], n_m: float) -> DiffusionMatrix:
    thermal = params.gamma_m * (2.0 * n_m + 1.0)
    return DiffusionMatrix(np.diag([0.0, thermal, params.gamma_a, params.gamma_a]))


def diffusion_effective(d: DerivedParams, n_m: float) -> DiffusionMatrix:
    thermal = d.gamma_m * (2.0 * n_m + 1.0)
    return DiffusionMatrix(np.diag([thermal, thermal, d.gamma_eff, d.gamma_eff]))


def initial_covariance(n_m: float, n_modes: int = 3) -> CovarianceState:
    """Thermal mirror, vacuum elsewhere: Diag[n_m + 1/2, n_m + 1/2, 1/2, ...]."""
    if n_m < 0:
        raise DomainError(f"mean occupation must be >= 0, got {n_m}")
    diag = [n_m + 0.5, n_m + 0.5] + [0.5] * (2 * (n_modes - 1))
    return CovarianceState(np.diag(diag))


@dataclass(frozen=True)
class StabilityReport:
    eigenvalues: np.ndarray
    max_real: float
    hurwitz: bool
    marginal: bool


def stability_report(A: Union[DriftMatrix, np.ndarray], tol: float = 1e-12) -> StabilityReport:
    entries = A.entries if isinstance(A, DriftMatrix) else np.asarray(A, dtype=float)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise InvalidDimensionError("stability needs a square matrix")
    eigs = np.linalg.eigvals(entries)
    max_real = float(np.max(eigs.real))
    return StabilityReport(eigs, max_real, max_real < -tol, abs(max_real) <= tol)


def lyapunov_residual(B: np.ndarray, V: np.ndarray, D: np.ndarray) -> float:
    return float(np.max(np.abs(B @ V + V @ B.T + D)))


def lyapunov_steady(B: DriftMatrix, D: DiffusionMatrix) -> CovarianceState:
    """
    Solve B V + V B^T = -D by vectorization.

    With row-major vec, vec(B V) = (B kron I) vec(V) and vec(V B^T) = (I kron B) vec(V),
    so the n^2 x n^2 system is (B kron I + I kron B) vec(V) = -vec(D).

    Raises:
    ------
    StabilityError
        B is not Hurwitz, so no stationary state exists
    DegenerateSystemError
        the vectorized system is singular or the residual cannot be reduced below tolerance
    """
    if B.n != D.n:
        raise InvalidDimensionError(f"drift {B.n}x{B.n} and diffusion {D.n}x{D.n} differ")
    report = stability_report(B)
    if not report.hurwitz:
        raise StabilityError(f"drift is not Hurwitz (max Re eigenvalue {report.max_real:.6g})")

    n = B.n
    I = np.eye(n)
    M = np.kron(B.entries, I) + np.kron(I, B.entries)
    if np.linalg.cond(M) > 1.0 / np.finfo(float).eps:
        raise DegenerateSystemError("vectorized Lyapunov system is numerically singular")
    try:
        V = np.linalg.solve(M, -D.entries.reshape(-1)).reshape(n, n)
        # one step of iterative refinement
        R = B.entries @ V + V @ B.entries.T + D.entries
        V = V + np.linalg.solve(M, -R.reshape(-1)).reshape(n, n)
    except np.linalg.LinAlgError as e:
        raise DegenerateSystemError(f"vectorized Lyapunov system is singular: {e}") from e
    V = 0.5 * (V + V.T)

    res = lyapunov_residual(B.entries, V, D.entries)
    if res > settings.lyapunov_residual_tol:
        raise DegenerateSystemError(f"Lyapunov residual {res:.3g} exceeds {settings.lyapunov_residual_tol:.3g}")
    return CovarianceState(V, math.inf)


def analytic_variance(d: DerivedParams) -> float:
    """
    Closed-form steady <dq^2> of the reduced model at gamma_m = 0:
        [omega_m + S^2 / (Omega_m S - G_g^2 Delta_G)] / (4 Delta_G),  S = Delta_G^2 + gamma_a^2.
    """
    if d.Delta_G == 0:
        raise SingularParameterError("Delta_G vanishes")
    S = d.Delta_G ** 2 + d.gamma_a ** 2
    K = d.Omega_m * S - d.G_g ** 2 * d.Delta_G
    if K == 0:
        raise SingularParameterError("Omega_m (Delta_G^2 + gamma_a^2) - G_g^2 Delta_G vanishes")
    return (d.omega_m + S * S / K) / (4.0 * d.Delta_G)


class TrajectoryDrift:
    """A(t) of the full model, interpolated from a stored mean-field trajectory."""

    def __init__(self, p: PhysicalParams, trajectory: MeanFieldTrajectory):
        self.p = p
        self.trajectory = trajectory

    def __call__(self, t: float) -> np.ndarray:
        return drift_full(self.p, self.trajectory.at(t)).entries


DriftSource = Union[DriftMatrix, Callable[[float], np.ndarray]]


@dataclass
class CovarianceResult:
    series: TimeSeries
    final: CovarianceState
    steady_var_q: float
    converged: bool
    worst_margin: float
    min_uncertainty: float
    extras: dict[str, object] = field(default_factory=dict)

    @property
    def physical(self) -> bool:
        return self.worst_margin >= -settings.symplectic_tol

    def diagnostics(self) -> dict[str, object]:
        return {
            "converged": self.converged,
            "physical": self.physical,
            "worst_margin": self.worst_margin,
            "min_uncertainty": self.min_uncertainty,
        }


def _default_cm_dt(max_rate: float) -> float:
    if settings.cm_dt is not None:
        return settings.cm_dt
    return min(0.01, 0.25 / max(max_rate, 1.0))


class _CovarianceRecorder:
    """Samples V11, V22 and the physicality margin; aborts on a physicality breach."""

    def __init__(self, n: int, unpack: Callable[[np.ndarray], np.ndarray]):
        self.n = n
        self.unpack = unpack
        self.t: list[float] = []
        self.v11: list[float] = []
        self.v22: list[float] = []
        self.margin: list[float] = []

    def __call__(self, t: float, y: np.ndarray) -> bool:
        V = self.unpack(y)
        V[...] = 0.5 * (V + V.T)
        margin = physicality_margin(V)
        if margin < -settings.physicality_abort_tol:
            raise PhysicalityError(
                f"covariance matrix violates the uncertainty principle at t = {t:.6g}",
                {"t": t, "margin": margin},
            )
        self.t.append(t)
        self.v11.append(float(V[0, 0]))
        self.v22.append(float(V[1, 1]))
        self.margin.append(margin)
        return False

    def result(self, V: np.ndarray, t: float, extras: Optional[dict] = None) -> CovarianceResult:
        series = TimeSeries(np.array(self.t), {
            "V11": np.array(self.v11),
            "V22": np.array(self.v22),
            "margin": np.array(self.margin),
        })
        tail = series.tail(0.1).column("V11")
        drift = (tail.max() - tail.min()) / max(abs(tail.mean()), 1e-12)
        uncertainty = np.array(self.v11) * np.array(self.v22)
        return CovarianceResult(
            series=series,
            final=CovarianceState(0.5 * (V + V.T), t),
            steady_var_q=float(tail.mean()),
            converged=bool(drift < settings.me_convergence_drift),
            worst_margin=float(min(self.margin)),
            min_uncertainty=float(uncertainty.min()),
            extras=extras or {},
        )


def evolve_covariance(
    A: DriftSource,
    D: DiffusionMatrix,
    V0: CovarianceState,
    t_final: Optional[float] = None,
    dt: Optional[float] = None,
    sample_dt: Optional[float] = None,
) -> CovarianceResult:
    """
    Integrate dV/dt = A V + V A^T + D with fixed-step RK4.

    Parameters:
    ----------
    A : DriftMatrix or callable
        Static drift, or t -> drift entries (e.g. TrajectoryDrift)
    D : DiffusionMatrix
    V0 : CovarianceState
    t_final : float, optional
        settings.cm_t_final by default
    dt : float, optional
        settings.cm_dt, else min(0.01, 0.25 / largest drift entry)
    sample_dt : float, optional
        t_final/2000 by default

    Raises:
    ------
    PhysicalityError
        V + i Omega/2 acquires an eigenvalue below -settings.physicality_abort_tol
    """
    t_final = t_final if t_final is not None else settings.cm_t_final
    if isinstance(A, DriftMatrix):
        static = A.entries
        n = A.n

        def drift(t: float) -> np.ndarray:
            return static
    else:
        drift = A
        n = drift(V0.t).shape[0]
    if V0.V.shape != (n, n) or D.n != n:
        raise InvalidDimensionError("drift, diffusion and covariance sizes differ")
    dt = dt or _default_cm_dt(float(np.max(np.abs(drift(V0.t)))))
    sample_every = max(1, int(round((sample_dt or t_final / 2000.0) / dt)))
    Dm = D.entries

    def rhs(t: float, V: np.ndarray) -> np.ndarray:
        At = drift(t)
        AV = At @ V
        return AV + AV.T + Dm

    recorder = _CovarianceRecorder(n, lambda y: y)
    logger.debug("covariance %dx%d: dt=%.3g t_final=%.6g", n, n, dt, t_final)
    result = rk4_integrate(rhs, np.array(V0.V), V0.t, t_final, dt, sample_every, recorder)
    return recorder.result(result.y, result.t)


def evolve_covariance_cointegrated(
    p: PhysicalParams,
    n_m: float,
    t_final: Optional[float] = None,
    dt: Optional[float] = None,
    sample_dt: Optional[float] = None,
) -> CovarianceResult:
    """
    Mean values (q, p, a, c) and the 6x6 covariance integrated as one system from rest.

    Cross-check of the interpolated TrajectoryDrift track; the final mean
    field is returned in extras["mean_field"].
    """
    t_final = t_final if t_final is not None else settings.cm_t_final
    dt = dt or settings.cm_dt or stiffness_dt(p, 0.25)
    mf_rhs = qpac_rhs(p)
    Dm = diffusion_full(p, n_m).entries

    def unpack_mf(y: np.ndarray) -> MeanFieldState:
        q, mom = y[0], y[1]
        return MeanFieldState(0.0, complex(y[2], y[3]), complex(q, mom) / math.sqrt(2.0), complex(y[4], y[5]))

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        z = np.array([y[0], y[1], y[2] + 1j * y[3], y[4] + 1j * y[5]])
        dz = mf_rhs(t, z)
        A = drift_full(p, unpack_mf(y)).entries
        V = y[6:].reshape(6, 6)
        AV = A @ V
        dV = AV + AV.T + Dm
        return np.concatenate([[dz[0].real, dz[1].real, dz[2].real, dz[2].imag, dz[3].real, dz[3].imag],
                               dV.ravel()])

    y0 = np.concatenate([np.zeros(6), initial_covariance(n_m).V.ravel()])
    sample_every = max(1, int(round((sample_dt or t_final / 2000.0) / dt)))
    recorder = _CovarianceRecorder(6, lambda y: y[6:].reshape(6, 6))
    result = rk4_integrate(rhs, y0, 0.0, t_final, dt, sample_every, recorder, settings.meanfield_divergence)
    final_mf = unpack_mf(result.y)
    return recorder.result(result.y[6:].reshape(6, 6), result.t,
                           {"mean_field": MeanFieldState(result.t, final_mf.a, final_mf.b, final_mf.c)})
