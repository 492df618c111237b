"""
Exception hierarchy shared by every simulation track.
"""
from typing import Optional


class SqueezingSimError(Exception):
    """Base class for all simulator errors."""


class InvalidDimensionError(SqueezingSimError):
    """Operator or state dimensions do not fit the Hilbert space."""


class DomainError(SqueezingSimError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class ParametricInstabilityError(DomainError):
    """1 + 4 eta'/omega_m <= 0: the parametric term destabilises the oscillator."""


class SingularParameterError(SqueezingSimError, ZeroDivisionError):
    """A closed-form expression would divide by zero (e.g. Delta_c = 0)."""


class InstabilityError(SqueezingSimError):
    """A trajectory diverged during integration."""

    def __init__(self, message: str, t_blowup: float):
        super().__init__(f"{message} (t = {t_blowup:.6g})")
        self.t_blowup = t_blowup


class NotSteadyError(SqueezingSimError):
    """The tail of a trajectory has not settled; extend t_final."""

    def __init__(self, message: str, variation: Optional[float] = None):
        super().__init__(message)
        self.variation = variation


class InterpolationRangeError(SqueezingSimError):
    """A time lies outside a stored trajectory."""


class PhysicalityError(SqueezingSimError):
    """A density or covariance matrix stopped being a physical state."""

    def __init__(self, message: str, diagnostic: Optional[dict] = None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class StabilityError(SqueezingSimError):
    """Drift matrix is not Hurwitz, so there is no stationary state."""


class DegenerateSystemError(SqueezingSimError):
    """Vectorized Lyapunov system is singular."""


class ConfigSchemaError(SqueezingSimError):
    """Run configuration failed validation."""

    def __init__(self, message: str, field_path: str = ""):
        super().__init__(f"{field_path}: {message}" if field_path else message)
        self.field_path = field_path


class UnknownExperimentError(SqueezingSimError, KeyError):
    """Experiment id is not in the registry."""
