"""
Finite-dimensional operator algebra on truncated bosonic Fock spaces.

Operators and states are built with qutip and handed out as dense complex
numpy arrays, which is what the sparse superoperator assembly consumes. Everything returned from this module is read-only;
build new arrays instead of mutating. Mode order is fixed: a (x) b (x) c for
three-mode spaces, b (x) c for two modes.
"""
from dataclasses import dataclass
from math import prod
from typing import Optional, Sequence

import numpy as np
import qutip
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.exceptions import DomainError, InvalidDimensionError

QOperator = np.ndarray
DensityMatrix = np.ndarray

THREE_MODE_LABELS = ("a", "b", "c")
TWO_MODE_LABELS = ("b", "c")


class HilbertSpec(BaseModel):
    """Per-mode truncation levels of a tensor-product Fock space."""

    model_config = ConfigDict(frozen=True)

    mode_dims: tuple[int, ...] = Field(..., min_length=1)
    labels: tuple[str, ...] = ()

    @field_validator("mode_dims")
    @classmethod
    def validate_dims(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        for n in v:
            if n < 2:
                raise ValueError(f"mode dimension {n} < 2")
        return v

    @model_validator(mode="after")
    def validate_labels(self) -> "HilbertSpec":
        if self.labels and len(self.labels) != len(self.mode_dims):
            raise ValueError("labels must name every mode")
        if self.labels and len(self.labels) == 3 and self.labels != THREE_MODE_LABELS:
            raise ValueError(f"three-mode spaces are ordered {THREE_MODE_LABELS}")
        if self.labels and len(self.labels) == 2 and self.labels != TWO_MODE_LABELS:
            raise ValueError(f"two-mode spaces are ordered {TWO_MODE_LABELS}")
        return self

    @classmethod
    def three_mode(cls, dims: Sequence[int]) -> "HilbertSpec":
        return cls(mode_dims=tuple(dims), labels=THREE_MODE_LABELS)

    @classmethod
    def two_mode(cls, dims: Sequence[int]) -> "HilbertSpec":
        return cls(mode_dims=tuple(dims), labels=TWO_MODE_LABELS)

    @property
    def dim(self) -> int:
        return prod(self.mode_dims)

    def slot(self, label: str) -> int:
        """Index of a named mode."""
        try:
            return self.labels.index(label)
        except ValueError:
            raise InvalidDimensionError(f"mode '{label}' not in {self.labels}") from None


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _dense(q: qutip.Qobj) -> np.ndarray:
    return _freeze(np.array(q.full(), dtype=complex))


def _check_levels(n_levels: int) -> None:
    if n_levels < 2:
        raise InvalidDimensionError(f"need at least 2 Fock levels, got {n_levels}")


def annihilation(n_levels: int) -> QOperator:
    """Lowering operator with <m|b|m+1> = sqrt(m+1)."""
    _check_levels(n_levels)
    return _dense(qutip.destroy(n_levels))


def creation(n_levels: int) -> QOperator:
    _check_levels(n_levels)
    return _dense(qutip.create(n_levels))


def number(n_levels: int) -> QOperator:
    _check_levels(n_levels)
    return _dense(qutip.num(n_levels))


def identity(n_levels: int) -> QOperator:
    return _dense(qutip.qeye(n_levels))


def dagger(op: QOperator) -> QOperator:
    return op.conj().T


def commutator(a: QOperator, b: QOperator) -> QOperator:
    return a @ b - b @ a


def position_quadrature(b: QOperator) -> QOperator:
    """X = (b + b^dag)/sqrt(2)."""
    return _freeze((b + dagger(b)) / np.sqrt(2.0))


def momentum_quadrature(b: QOperator) -> QOperator:
    """Y = (b - b^dag)/(sqrt(2) i)."""
    return _freeze((b - dagger(b)) / (np.sqrt(2.0) * 1j))


def to_qobj(op: np.ndarray, spec: Optional[HilbertSpec] = None) -> qutip.Qobj:
    """Wrap an operator or density matrix, carrying the mode structure of `spec`."""
    if spec is None:
        return qutip.Qobj(np.asarray(op))
    if op.shape != (spec.dim, spec.dim):
        raise InvalidDimensionError(f"operator {op.shape} does not match dimension {spec.dim}")
    dims = list(spec.mode_dims)
    return qutip.Qobj(np.asarray(op), dims=[dims, dims])


def embed(op: QOperator, slot: int, spec: HilbertSpec) -> QOperator:
    """identity (x) ... (x) op (x) ... (x) identity in HilbertSpec mode order."""
    if not 0 <= slot < len(spec.mode_dims):
        raise InvalidDimensionError(f"slot {slot} out of range for {len(spec.mode_dims)} modes")
    if op.shape != (spec.mode_dims[slot], spec.mode_dims[slot]):
        raise InvalidDimensionError(
            f"operator shape {op.shape} does not match mode dimension {spec.mode_dims[slot]}"
        )
    factors = [to_qobj(op) if i == slot else qutip.qeye(n) for i, n in enumerate(spec.mode_dims)]
    return _dense(qutip.tensor(factors))


def mode_operator(spec: HilbertSpec, label: str) -> QOperator:
    """Annihilation operator of a named mode embedded in the full space."""
    slot = spec.slot(label)
    return embed(annihilation(spec.mode_dims[slot]), slot, spec)


def tensor(*ops: np.ndarray) -> np.ndarray:
    return _dense(qutip.tensor([to_qobj(op) for op in ops]))


def fock_state(n_levels: int, k: int) -> DensityMatrix:
    """Projector |k><k|."""
    _check_levels(n_levels)
    if not 0 <= k < n_levels:
        raise InvalidDimensionError(f"level {k} outside 0..{n_levels - 1}")
    return _dense(qutip.fock_dm(n_levels, k))


def vacuum(n_levels: int) -> DensityMatrix:
    return fock_state(n_levels, 0)


def thermal_state(n_levels: int, n_m: float) -> DensityMatrix:
    """Bose-Einstein populations n^k/(n+1)^(k+1), renormalised after truncation."""
    _check_levels(n_levels)
    if n_m < 0:
        raise DomainError(f"mean occupation must be >= 0, got {n_m}")
    if n_m == 0:
        return vacuum(n_levels)
    rho = np.array(qutip.thermal_dm(n_levels, n_m).full(), dtype=complex)
    return _freeze(rho / np.trace(rho).real)


def expectation(op: QOperator, rho: DensityMatrix) -> complex:
    """Tr[op rho]."""
    if op.shape != rho.shape:
        raise InvalidDimensionError(f"operator {op.shape} and state {rho.shape} differ")
    return complex(qutip.expect(to_qobj(op), to_qobj(rho)))


def is_hermitian(op: QOperator, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(op - dagger(op)), initial=0.0) <= tol)


def quadrature_variance(rho: DensityMatrix, Z: QOperator) -> float:
    """<Z^2> - <Z>^2 for a Hermitian quadrature Z."""
    if not is_hermitian(Z, 1e-10):
        raise DomainError("quadrature operator must be Hermitian")
    mean = expectation(Z, rho).real
    second = expectation(Z @ Z, rho).real
    return max(second - mean * mean, 0.0)


@dataclass(frozen=True)
class PhysicalityReport:
    hermiticity_defect: float
    trace_defect: float
    min_eigenvalue: float

    def ok(self, hermiticity_tol: float = 1e-12, trace_tol: float = 1e-10,
           positivity_tol: float = 1e-10) -> bool:
        return (
            self.hermiticity_defect <= hermiticity_tol
            and self.trace_defect <= trace_tol
            and self.min_eigenvalue >= -positivity_tol
        )


def check_density_matrix(rho: DensityMatrix) -> PhysicalityReport:
    """Hermiticity, trace and positivity diagnostics of rho."""
    herm = float(np.max(np.abs(rho - dagger(rho)), initial=0.0))
    trace = float(abs(np.trace(rho) - 1.0))
    eigs = np.linalg.eigvalsh((rho + dagger(rho)) / 2)
    return PhysicalityReport(herm, trace, float(eigs.min()))


def reduced_state(rho: DensityMatrix, spec: HilbertSpec, slot: int) -> DensityMatrix:
    """Partial trace over every mode except `slot`."""
    if rho.shape != (spec.dim, spec.dim):
        raise InvalidDimensionError(f"state {rho.shape} does not match dimension {spec.dim}")
    if not 0 <= slot < len(spec.mode_dims):
        raise InvalidDimensionError(f"slot {slot} out of range for {len(spec.mode_dims)} modes")
    return _dense(to_qobj(rho, spec).ptrace(slot))


def guard_population(rho: DensityMatrix, spec: HilbertSpec, slot: int, levels: int = 2) -> float:
    """Population held in the top `levels` Fock states of one mode."""
    reduced = reduced_state(rho, spec, slot)
    return float(np.real(np.trace(reduced[-levels:, -levels:])))


def max_guard_population(rho: DensityMatrix, spec: HilbertSpec, levels: int = 2) -> float:
    return max(guard_population(rho, spec, s, levels) for s in range(len(spec.mode_dims)))
