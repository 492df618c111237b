"""
Fluctuation Hamiltonians and Lindblad master-equation evolution.

Three Hamiltonians are supported:
  - full_linear:    three-mode (a, b, c) linearized Hamiltonian at the steady mean field
  - effective:      two-mode (b, c) Hamiltonian after adiabatic elimination of the cavity
  - time_dependent: three-mode Hamiltonian driven by a mean-field trajectory

Dissipator rates are twice the amplitude damping rates of the Langevin
equations (2 kappa, 2 gamma_m (n_m + 1), 2 gamma_m n_m, 2 gamma_a or 2 gamma_eff),
so that a decaying mode obeys <a^dag a>(t) = exp(-2 kappa t).

The master equation is evolved as a column-stacked vector, vec(rho), under a
sparse superoperator.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Literal, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse import identity as sparse_identity
from scipy.sparse import kron as sparse_kron

from src.config import settings
from src.exceptions import DomainError, InvalidDimensionError, PhysicalityError
from src.model.SystemParameters import DerivedParams, PhysicalParams, effective_params
from src.model.TimeSeries import TimeSeries
from src.qcore.FockSpace import (
    DensityMatrix,
    HilbertSpec,
    PhysicalityReport,
    QOperator,
    annihilation,
    check_density_matrix,
    dagger,
    embed,
    is_hermitian,
    max_guard_population,
    mode_operator,
    momentum_quadrature,
    position_quadrature,
    reduced_state,
    tensor,
    thermal_state,
    vacuum,
)
from src.service.CovarianceService import drift_effective, stability_report
from src.service.Integrators import expm_integrate, exponential_integrate, rk4_integrate
from src.service.MeanFieldService import MeanFieldTrajectory, steady_mean_field
from src.service.SweepService import SweepRow, fan_out

logger = logging.getLogger(__name__)

Propagator = Literal["exact", "rk4"]


class HamiltonianKind(str, Enum):
    FULL_LINEAR = "full_linear"
    EFFECTIVE = "effective"
    TIME_DEPENDENT = "time_dependent"


@dataclass(frozen=True)
class HamiltonianSpec:
    kind: HamiltonianKind
    derived: DerivedParams
    space: HilbertSpec
    physical: Optional[PhysicalParams] = None
    trajectory: Optional[MeanFieldTrajectory] = None

    def __post_init__(self):
        n_modes = len(self.space.mode_dims)
        if self.kind == HamiltonianKind.EFFECTIVE and n_modes != 2:
            raise InvalidDimensionError("effective Hamiltonian lives on the two-mode (b, c) space")
        if self.kind != HamiltonianKind.EFFECTIVE and n_modes != 3:
            raise InvalidDimensionError(f"{self.kind.value} Hamiltonian lives on the three-mode (a, b, c) space")
        if self.kind != HamiltonianKind.EFFECTIVE and self.physical is None:
            raise DomainError(f"{self.kind.value} Hamiltonian needs PhysicalParams")
        if self.kind == HamiltonianKind.TIME_DEPENDENT and self.trajectory is None:
            raise DomainError("time-dependent Hamiltonian needs a mean-field trajectory")

    @property
    def is_static(self) -> bool:
        return self.kind != HamiltonianKind.TIME_DEPENDENT


def effective_spec(d: DerivedParams, dims: Optional[Sequence[int]] = None) -> HamiltonianSpec:
    space = HilbertSpec.two_mode(dims or settings.truncation_effective)
    return HamiltonianSpec(HamiltonianKind.EFFECTIVE, d, space)


def full_linear_spec(p: PhysicalParams, d: DerivedParams, dims: Optional[Sequence[int]] = None) -> HamiltonianSpec:
    space = HilbertSpec.three_mode(dims or settings.truncation_full)
    return HamiltonianSpec(HamiltonianKind.FULL_LINEAR, d, space, physical=p)


def time_dependent_spec(
    p: PhysicalParams,
    d: DerivedParams,
    trajectory: MeanFieldTrajectory,
    dims: Optional[Sequence[int]] = None,
) -> HamiltonianSpec:
    space = HilbertSpec.three_mode(dims or settings.truncation_full)
    return HamiltonianSpec(HamiltonianKind.TIME_DEPENDENT, d, space, physical=p, trajectory=trajectory)


def _quad(op: QOperator) -> QOperator:
    return op + dagger(op)


@dataclass(frozen=True)
class HamiltonianPieces:
    """H(t) = static + sum_k coefficients(t)[k] drive[k], all CSR."""

    static: csr_matrix
    drive: tuple[csr_matrix, ...] = ()
    coefficients: Optional[Callable[[float], tuple[complex, ...]]] = None

    @property
    def is_static(self) -> bool:
        return not self.drive

    def at(self, t: float) -> csr_matrix:
        if self.is_static:
            return self.static
        H = self.static
        for f, op in zip(self.coefficients(t), self.drive):
            H = H + f * op
        return H


def hamiltonian_pieces(h: HamiltonianSpec) -> HamiltonianPieces:
    """Split H into its constant part and the mean-field driven terms."""
    space, d = h.space, h.derived

    if h.kind == HamiltonianKind.EFFECTIVE:
        b, c = mode_operator(space, "b"), mode_operator(space, "c")
        H = (d.omega_m_tilde * dagger(b) @ b
             + d.Delta_eff * dagger(c) @ c
             + d.G_eff * _quad(b) @ _quad(c)
             + d.eta_prime * (b @ b + dagger(b) @ dagger(b)))
        return HamiltonianPieces(csr_matrix(H))

    p = h.physical
    a, b, c = (mode_operator(space, label) for label in ("a", "b", "c"))
    n_a = dagger(a) @ a
    common = (p.omega_m_prime * dagger(b) @ b
              + p.Delta_a * dagger(c) @ c
              + p.eta * (b @ b + dagger(b) @ dagger(b))
              + p.G * (dagger(c) @ a + c @ dagger(a)))
    x_b = _quad(b)

    if h.kind == HamiltonianKind.FULL_LINEAR:
        return HamiltonianPieces(csr_matrix(common + d.Delta_c_eff * n_a - d.G0 * _quad(a) @ x_b))

    traj = h.trajectory
    g = p.g0_prime
    a_xb = a @ x_b

    def coefficients(t: float) -> tuple[complex, complex, complex]:
        mf = traj.at(t)
        alpha = -g * mf.a.conjugate()
        return p.delta_c - 2.0 * g * mf.b.real, alpha, alpha.conjugate()

    drive = (csr_matrix(n_a), csr_matrix(a_xb), csr_matrix(dagger(a_xb)))
    return HamiltonianPieces(csr_matrix(common), drive, coefficients)


def build_hamiltonian(h: HamiltonianSpec, t: float = 0.0) -> QOperator:
    """
    H(t) of the given kind.

    Raises:
    ------
    InterpolationRangeError
        time_dependent kind evaluated outside the stored trajectory
    """
    H = hamiltonian_pieces(h).at(t).toarray()
    if not is_hermitian(H, settings.hermiticity_tol * max(1.0, float(np.max(np.abs(H))))):
        raise PhysicalityError("Hamiltonian is not Hermitian", {"t": t})
    return H


@dataclass(frozen=True)
class DissipatorSpec:
    """Lindblad channels (label, jump operator, rate)."""

    channels: tuple[tuple[str, QOperator, float], ...]

    def __post_init__(self):
        for label, _, rate in self.channels:
            if rate < 0 or not math.isfinite(rate):
                raise DomainError(f"dissipator '{label}' has invalid rate {rate}")

    @property
    def rates(self) -> dict[str, float]:
        return {label: rate for label, _, rate in self.channels}


def full_dissipators(p: PhysicalParams, space: HilbertSpec, n_m: float) -> DissipatorSpec:
    a, b, c = (mode_operator(space, label) for label in ("a", "b", "c"))
    return DissipatorSpec((
        ("a", a, 2.0 * p.kappa),
        ("b", b, 2.0 * p.gamma_m * (n_m + 1.0)),
        ("b_dag", dagger(b), 2.0 * p.gamma_m * n_m),
        ("c", c, 2.0 * p.gamma_a),
    ))


def effective_dissipators(d: DerivedParams, space: HilbertSpec, n_m: float) -> DissipatorSpec:
    b, c = mode_operator(space, "b"), mode_operator(space, "c")
    return DissipatorSpec((
        ("b", b, 2.0 * d.gamma_m * (n_m + 1.0)),
        ("b_dag", dagger(b), 2.0 * d.gamma_m * n_m),
        ("c", c, 2.0 * d.gamma_eff),
    ))


def dissipators_for(h: HamiltonianSpec, n_m: float) -> DissipatorSpec:
    if h.kind == HamiltonianKind.EFFECTIVE:
        return effective_dissipators(h.derived, h.space, n_m)
    return full_dissipators(h.physical, h.space, n_m)


def lindblad_rhs(H: QOperator, d: DissipatorSpec, rho: DensityMatrix) -> np.ndarray:
    """-i[H, rho] + sum_k rate_k (L rho L^dag - {L^dag L, rho}/2)."""
    if H.shape != rho.shape:
        raise InvalidDimensionError(f"Hamiltonian {H.shape} and state {rho.shape} differ")
    out = -1j * (H @ rho - rho @ H)
    for label, L, rate in d.channels:
        if L.shape != rho.shape:
            raise InvalidDimensionError(f"jump operator '{label}' has shape {L.shape}")
        if rate == 0.0:
            continue
        Ld = dagger(L)
        LdL = Ld @ L
        out += rate * (L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL))
    return out


def _spre(A: csr_matrix) -> csr_matrix:
    return sparse_kron(sparse_identity(A.shape[0], dtype=complex), A, format="csr")


def _spost(A: csr_matrix) -> csr_matrix:
    return sparse_kron(A.T, sparse_identity(A.shape[0], dtype=complex), format="csr")


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Column-stacked vec(rho)."""
    return np.asarray(rho, dtype=complex).reshape(-1, order="F")


def unvectorize(v: np.ndarray, n: int) -> np.ndarray:
    return v.reshape((n, n), order="F")


def commutator_superoperator(H: Union[QOperator, csr_matrix]) -> csr_matrix:
    """vec(-i[H, rho]) = -i (I (x) H - H^T (x) I) vec(rho)."""
    H = csr_matrix(H, dtype=complex)
    return (-1j * (_spre(H) - _spost(H))).tocsr()


def dissipator_superoperator(L: Union[QOperator, csr_matrix], rate: float) -> csr_matrix:
    """rate (L rho L^dag - {L^dag L, rho}/2) in column-stacked form."""
    L = csr_matrix(L, dtype=complex)
    LdL = (L.conj().T @ L).tocsr()
    jump = sparse_kron(L.conj(), L, format="csr")
    return (rate * (jump - 0.5 * _spre(LdL) - 0.5 * _spost(LdL))).tocsr()


class Liouvillian:
    """
    Column-stacked master-equation generator

        L(t) = L_0 + sum_k f_k(t) S_k,

    where L_0 holds the constant Hamiltonian and every dissipator, and S_k is
    the commutator superoperator of the k-th mean-field driven term. The
    pieces are assembled once; a step only rescales and adds them.
    """

    # Gauss nodes and weights of the fourth-order commutator-free exponential pair
    _NODES = (0.5 - math.sqrt(3.0) / 6.0, 0.5 + math.sqrt(3.0) / 6.0)
    _WEIGHTS = (0.25 + math.sqrt(3.0) / 6.0, 0.25 - math.sqrt(3.0) / 6.0)

    def __init__(self, hamiltonian: Union[HamiltonianPieces, QOperator], dissipators: DissipatorSpec):
        pieces = hamiltonian if isinstance(hamiltonian, HamiltonianPieces) else HamiltonianPieces(csr_matrix(hamiltonian))
        self.dim = pieces.static.shape[0]
        L0 = commutator_superoperator(pieces.static)
        for label, L, rate in dissipators.channels:
            if L.shape != (self.dim, self.dim):
                raise InvalidDimensionError(f"jump operator '{label}' has shape {L.shape}")
            if rate > 0:
                L0 = L0 + dissipator_superoperator(L, rate)
        self.static = L0.tocsr()
        self._drive = tuple(commutator_superoperator(op) for op in pieces.drive)
        self._coefficients = pieces.coefficients

    @property
    def is_static(self) -> bool:
        return not self._drive

    def _combine(self, static_weight: float, coefficients: Sequence[complex]) -> csr_matrix:
        out = static_weight * self.static
        for f, S in zip(coefficients, self._drive):
            if f != 0:
                out = out + f * S
        return out

    def at(self, t: float) -> csr_matrix:
        if self.is_static:
            return self.static
        return self._combine(1.0, self._coefficients(t))

    def __call__(self, t: float, v: np.ndarray) -> np.ndarray:
        return self.at(t) @ v

    def step_generators(self, t: float, h: float) -> list[csr_matrix]:
        """h-scaled exponents of one fourth-order step over [t, t + h]."""
        if self.is_static:
            return [h * self.static]
        f1 = np.asarray(self._coefficients(t + self._NODES[0] * h))
        f2 = np.asarray(self._coefficients(t + self._NODES[1] * h))
        w1, w2 = self._WEIGHTS
        # w1 + w2 = 1/2 for each exponent, so both are Lindblad generators
        return [
            self._combine(0.5 * h, h * (w1 * f1 + w2 * f2)),
            self._combine(0.5 * h, h * (w2 * f1 + w1 * f2)),
        ]


def initial_state(space: HilbertSpec, n_m: float) -> DensityMatrix:
    """Mechanical mode thermal(n_m), every other mode in vacuum."""
    factors = []
    for label, n in zip(space.labels, space.mode_dims):
        factors.append(thermal_state(n, n_m) if label == "b" else vacuum(n))
    return tensor(*factors)


def reduced_mode_state(rho: DensityMatrix, space: HilbertSpec, label: str) -> DensityMatrix:
    return reduced_state(rho, space, space.slot(label))


def default_dt(h: HamiltonianSpec, method: Optional[Propagator] = None) -> float:
    """
    Step of the stepwise schemes. Exact propagation of a static generator
    has no step; RK4 needs 0.01 for the effective model and
    0.05/max(|Delta_c|, ...) for three-mode kinds.
    """
    method = method or settings.me_propagator
    if h.kind == HamiltonianKind.TIME_DEPENDENT and method == "exact":
        return settings.me_dt_time_dependent
    if h.kind == HamiltonianKind.EFFECTIVE:
        return settings.me_dt_effective
    if settings.me_dt_full is not None:
        return settings.me_dt_full
    p, d = h.physical, h.derived
    fastest = max(abs(d.Delta_c_eff), abs(p.delta_c), p.kappa, abs(p.G), abs(p.Delta_a), p.omega_m_prime)
    return 0.05 / fastest


def default_t_final(h: HamiltonianSpec) -> float:
    if h.kind == HamiltonianKind.EFFECTIVE:
        return settings.me_t_final_effective
    return settings.me_t_final_full


@dataclass
class ConvergenceDetector:
    """Relative drift of one observable over the trailing 10% of elapsed time."""

    tolerance: float
    min_time: float
    min_samples: int = 10
    t: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    fired_at: Optional[float] = None

    def update(self, t: float, value: float) -> bool:
        self.t.append(t)
        self.values.append(value)
        if self.fired_at is not None or t < self.min_time:
            return self.fired_at is not None
        window = [v for s, v in zip(self.t, self.values) if s >= 0.9 * t]
        if len(window) < self.min_samples:
            return False
        scale = max(abs(float(np.mean(window))), 1e-12)
        if (max(window) - min(window)) / scale < self.tolerance:
            self.fired_at = t
        return self.fired_at is not None


@dataclass
class MasterEquationResult:
    series: TimeSeries
    rho: DensityMatrix
    steady: dict[str, float]
    converged: bool
    t_converged: Optional[float]
    worst: PhysicalityReport
    min_heisenberg: float
    guard_population: float
    propagator: str = "exact"

    @property
    def truncation_ok(self) -> bool:
        return self.guard_population < settings.guard_population_tol

    @property
    def physical(self) -> bool:
        return self.worst.ok(settings.hermiticity_tol, settings.trace_tol, settings.positivity_tol)

    @property
    def steady_var_x(self) -> float:
        return self.steady["var_X"]

    def diagnostics(self) -> dict[str, object]:
        return {
            "converged": self.converged,
            "t_converged": self.t_converged,
            "truncation_ok": self.truncation_ok,
            "guard_population": self.guard_population,
            "physical": self.physical,
            "hermiticity_defect": self.worst.hermiticity_defect,
            "trace_defect": self.worst.trace_defect,
            "min_eigenvalue": self.worst.min_eigenvalue,
            "min_heisenberg": self.min_heisenberg,
            "propagator": self.propagator,
        }


def _trace_row(op: QOperator) -> np.ndarray:
    """Row w with Tr[op rho] = w @ vec(rho)."""
    return np.ascontiguousarray(np.asarray(op, dtype=complex).ravel(order="C"))


def evolve_master_equation(
    h: Union[HamiltonianSpec, QOperator],
    d: DissipatorSpec,
    rho0: DensityMatrix,
    t_final: Optional[float] = None,
    dt: Optional[float] = None,
    observables: Optional[Mapping[str, QOperator]] = None,
    space: Optional[HilbertSpec] = None,
    sample_dt: Optional[float] = None,
    stop_when_steady: bool = True,
    method: Optional[Propagator] = None,
    t_start: float = 0.0,
) -> MasterEquationResult:
    """
    Evolve the master equation from rho0 at t_start to t_final.

    With method "exact" (settings.me_propagator) a static generator is
    applied as exp(L t) between samples, and a mean-field driven one by
    fourth-order steps of frozen Lindblad generators, so every step is a
    completely positive map. Method "rk4" integrates the same vectorized
    equation with fixed-step RK4.

    Parameters:
    ----------
    h : HamiltonianSpec or QOperator
        Hamiltonian source; a bare matrix is treated as static
    d : DissipatorSpec
        Lindblad channels
    rho0 : DensityMatrix
        Initial state
    t_final, dt : float, optional
        Defaults per Hamiltonian kind (see default_dt / default_t_final);
        dt is unused by exact propagation of a static generator
    observables : mapping, optional
        Extra operators sampled as real expectation values
    space : HilbertSpec, optional
        Needed for quadrature columns and guard levels when h is a bare matrix
    sample_dt : float, optional
        Sampling interval; (t_final - t_start)/2000 by default
    stop_when_steady : bool
        Stop once the primary observable's relative drift over the trailing
        10% falls below settings.me_convergence_drift
    method : {"exact", "rk4"}, optional
        Propagation scheme
    t_start : float
        Start time; a time-dependent Hamiltonian reads its trajectory from here

    Returns:
    -------
    MasterEquationResult
        Sampled series (var_X, var_Y, n_b and the extra observables), final
        state, tail-averaged steady values and the physicality record.

    Raises:
    ------
    PhysicalityError
        trace, Hermiticity or positivity defect beyond settings.physicality_abort_tol
    """
    method = method or settings.me_propagator
    if method not in ("exact", "rk4"):
        raise DomainError(f"unknown propagator '{method}'")
    if isinstance(h, HamiltonianSpec):
        space = h.space
        t_final = t_final if t_final is not None else default_t_final(h)
        dt = dt or default_dt(h, method)
        pieces = hamiltonian_pieces(h)
    else:
        if t_final is None:
            raise DomainError("t_final is required for a bare Hamiltonian matrix")
        if method == "rk4" and dt is None:
            raise DomainError("dt is required to integrate a bare Hamiltonian matrix with rk4")
        pieces = HamiltonianPieces(csr_matrix(h))
    if t_final <= t_start:
        raise DomainError(f"t_final = {t_final} must exceed t_start = {t_start}")

    liouvillian = Liouvillian(pieces, d)
    n = liouvillian.dim
    if rho0.shape != (n, n):
        raise InvalidDimensionError(f"initial state {rho0.shape} does not match the Hamiltonian ({n}, {n})")
    if space is not None and n != space.dim:
        raise InvalidDimensionError(f"Hamiltonian dimension {n} does not match space dimension {space.dim}")

    rows: dict[str, np.ndarray] = {}
    quadratures = space is not None and "b" in space.labels
    if quadratures:
        slot = space.slot("b")
        b_local = annihilation(space.mode_dims[slot])
        X = embed(position_quadrature(b_local), slot, space)
        Y = embed(momentum_quadrature(b_local), slot, space)
        b = mode_operator(space, "b")
        rows.update({name: _trace_row(op) for name, op in
                     {"X": X, "X2": X @ X, "Y": Y, "Y2": Y @ Y, "n_b": dagger(b) @ b}.items()})
    extra = {name: _trace_row(op) for name, op in (observables or {}).items()}

    span = t_final - t_start
    sample_dt = sample_dt or span / 2000.0
    detector = ConvergenceDetector(settings.me_convergence_drift, min_time=0.2 * span)

    times: list[float] = []
    columns: dict[str, list[float]] = {name: [] for name in (["var_X", "var_Y", "n_b"] if quadratures else [])}
    columns.update({name: [] for name in extra})
    worst = {"hermiticity_defect": 0.0, "trace_defect": 0.0, "min_eigenvalue": 1.0}
    min_heisenberg = math.inf
    abort = settings.physicality_abort_tol

    def on_sample(t: float, v: np.ndarray) -> bool:
        nonlocal min_heisenberg
        rho = unvectorize(v, n)
        report = check_density_matrix(rho)
        worst["hermiticity_defect"] = max(worst["hermiticity_defect"], report.hermiticity_defect)
        worst["trace_defect"] = max(worst["trace_defect"], report.trace_defect)
        worst["min_eigenvalue"] = min(worst["min_eigenvalue"], report.min_eigenvalue)
        if (report.hermiticity_defect > abort or report.trace_defect > abort
                or report.min_eigenvalue < -abort):
            raise PhysicalityError(
                f"density matrix left the physical set at t = {t:.6g}; "
                "enlarge the truncation or reduce dt",
                {"t": t, **report.__dict__},
            )
        # remove accumulated round-off before the next step
        rho[...] = 0.5 * (rho + rho.conj().T)

        times.append(t)
        primary = None
        if quadratures:
            var_x = (rows["X2"] @ v).real - (rows["X"] @ v).real ** 2
            var_y = (rows["Y2"] @ v).real - (rows["Y"] @ v).real ** 2
            columns["var_X"].append(var_x)
            columns["var_Y"].append(var_y)
            columns["n_b"].append((rows["n_b"] @ v).real)
            min_heisenberg = min(min_heisenberg, var_x * var_y)
            primary = var_x
        for name, row in extra.items():
            value = (row @ v).real
            columns[name].append(value)
            primary = value if primary is None else primary
        if primary is None:
            return False
        return detector.update(t - t_start, primary) and stop_when_steady

    v0 = vectorize(rho0)
    if method == "exact" and liouvillian.is_static:
        logger.info("master equation: dim=%d exact propagation t=[%.6g, %.6g]", n, t_start, t_final)
        result = expm_integrate(liouvillian.static, v0, t_start, t_final, sample_dt, on_sample)
    else:
        sample_every = max(1, int(round(sample_dt / dt)))
        logger.info("master equation: dim=%d %s dt=%.3g t=[%.6g, %.6g]", n, method, dt, t_start, t_final)
        if method == "exact":
            result = exponential_integrate(liouvillian.step_generators, v0, t_start, t_final, dt,
                                           sample_every, on_sample)
        else:
            result = rk4_integrate(liouvillian, v0, t_start, t_final, dt, sample_every, on_sample)
    if result.stopped_early:
        logger.info("master equation converged at t=%.6g", result.t)

    rho = np.array(unvectorize(result.y, n), copy=True)
    series = TimeSeries(np.array(times), {k: np.array(v) for k, v in columns.items()},
                        {"dt": dt, "t_start": t_start, "t_final": t_final, "propagator": method})
    steady = {name: series.tail_mean(name) for name in series.names}
    guard = max_guard_population(rho, space) if space is not None and space.labels else 0.0
    return MasterEquationResult(
        series=series,
        rho=rho,
        steady=steady,
        converged=detector.fired_at is not None,
        t_converged=None if detector.fired_at is None else t_start + detector.fired_at,
        worst=PhysicalityReport(**worst),
        min_heisenberg=min_heisenberg,
        guard_population=guard,
        propagator=method,
    )


@dataclass(frozen=True)
class DetuningAxis:
    """Delta_eff values overriding the effective detuning of a fixed DerivedParams."""

    values: tuple[float, ...]


@dataclass(frozen=True)
class CouplingGrid:
    """(kappa, G) grid; every point re-derives the mean field and effective parameters."""

    kappas: tuple[float, ...]
    Gs: tuple[float, ...]


def _effective_point(
    d: DerivedParams,
    n_m: float,
    coords: dict[str, float],
    dims: Optional[Sequence[int]],
    t_final: Optional[float],
    dt: Optional[float],
) -> SweepRow:
    report = stability_report(drift_effective(d))
    if not report.hurwitz:
        return SweepRow(coords, math.nan, converged=False, stable=False,
                        message=f"effective drift not Hurwitz (max Re = {report.max_real:.3g})")
    h = effective_spec(d, dims)
    result = evolve_master_equation(h, dissipators_for(h, n_m), initial_state(h.space, n_m), t_final, dt)
    ok = result.converged and result.truncation_ok and result.physical
    return SweepRow(coords, result.steady_var_x, converged=ok, stable=True,
                    extras={"n_b": result.steady["n_b"], "guard_population": result.guard_population,
                            "t_converged": result.t_converged})


def steady_variance_sweep(
    axis: Union[DetuningAxis, CouplingGrid],
    base: Union[DerivedParams, PhysicalParams],
    n_m: float,
    dims: Optional[Sequence[int]] = None,
    t_final: Optional[float] = None,
    dt: Optional[float] = None,
    threads: Optional[int] = None,
) -> list[SweepRow]:
    """
    Steady <dX^2> of the effective master equation over a parameter grid.

    DetuningAxis needs base DerivedParams and overrides Delta_eff per point;
    CouplingGrid needs base PhysicalParams and re-derives everything per
    (kappa, G). Points that fail are recorded with stable=False.
    """
    if isinstance(axis, DetuningAxis):
        if not isinstance(base, DerivedParams):
            raise DomainError("a detuning sweep needs DerivedParams as its base")
        points = [{"Delta_eff": v, "n_m": n_m} for v in axis.values]

        def evaluate(point: dict[str, float]) -> SweepRow:
            return _effective_point(base.with_delta_eff(point["Delta_eff"]), n_m, point, dims, t_final, dt)
    elif isinstance(axis, CouplingGrid):
        if not isinstance(base, PhysicalParams):
            raise DomainError("a (kappa, G) sweep needs PhysicalParams as its base")
        points = [{"kappa": k, "G": g, "n_m": n_m} for k in axis.kappas for g in axis.Gs]

        def evaluate(point: dict[str, float]) -> SweepRow:
            p = base.with_overrides(kappa=point["kappa"], G=point["G"])
            steady = steady_mean_field(p)
            d = effective_params(p, steady.a_s, steady.b_s)
            return _effective_point(d, n_m, point, dims, t_final, dt)
    else:
        raise DomainError(f"unsupported sweep axis {type(axis).__name__}")

    return fan_out(points, evaluate, threads)

