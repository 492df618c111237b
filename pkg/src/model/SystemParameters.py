"""
Physical constants of the hybrid atom-optomechanical cavity and every derived
(effective) parameter used by the master-equation and covariance tracks.

All frequencies and rates are in units of the bare mechanical frequency omega_m.
Laboratory units enter only through P (mW) and omega_m_rad_s when the drive
amplitude E is computed.
"""
import math
from dataclasses import asdict, dataclass, replace
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.exceptions import DomainError, ParametricInstabilityError, SingularParameterError

HBAR = 1.054571817e-34  # J s


def drive_amplitude(P: float, kappa: float, omega_l: float) -> float:
    """
    Drive amplitude E = sqrt(2 P kappa / (hbar omega_l)).

    Parameters:
    ----------
    P : float
        Laser power in watts (0 gives an undriven cavity)
    kappa : float
        Cavity decay rate in rad/s
    omega_l : float
        Laser angular frequency in rad/s

    Returns:
    -------
    float
        E in rad/s; divide by omega_m (rad/s) to express it in mechanical units.
    """
    if P < 0:
        raise DomainError(f"drive power must be >= 0, got {P}")
    if kappa <= 0 or omega_l <= 0:
        raise DomainError("kappa and omega_l must be positive")
    return math.sqrt(2.0 * P * kappa / (HBAR * omega_l))


class PhysicalParams(BaseModel):
    """Laboratory-frame constants in units of omega_m (omega_m itself is the unit)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    omega_m: float = Field(default=1.0, gt=0.0, description="mechanical frequency (the unit)")
    gamma_m: float = Field(default=1e-6, ge=0.0, description="mechanical damping")
    g0_prime: float = Field(default=1e-3, description="single-photon coupling g0' = g0/sqrt(2)")
    omega_c: float = Field(default=1e8, description="cavity frequency")
    delta_c: float = Field(default=-250.0, description="cavity-laser detuning")
    kappa: float = Field(default=3.0, ge=0.0, description="cavity decay (field amplitude rate)")
    Delta_a: float = Field(default=1.1, description="atomic detuning")
    gamma_a: float = Field(default=0.1, ge=0.0, description="atomic decay")
    G: float = Field(default=8.0, description="collective atom-cavity coupling")
    eta: float = Field(default=0.2, description="qubit-induced parametric strength")
    n_m: float = Field(default=0.0, ge=0.0, description="mean thermal phonon number")
    E: Optional[float] = Field(default=None, description="drive amplitude; None derives it from P")
    P_mW: float = Field(default=20.0, ge=0.0, description="drive power in mW")
    omega_m_rad_s: float = Field(default=math.pi * 1e6, gt=0.0, description="omega_m in rad/s")

    @field_validator("*")
    @classmethod
    def validate_finite(cls, v):
        if isinstance(v, float) and not math.isfinite(v):
            raise ValueError("parameters must be finite")
        return v

    @property
    def g0(self) -> float:
        return math.sqrt(2.0) * self.g0_prime

    @property
    def omega_l(self) -> float:
        return self.omega_c - self.delta_c

    @property
    def omega_m_prime(self) -> float:
        return self.omega_m + 2.0 * self.eta

    @property
    def resolved_E(self) -> float:
        """E in units of omega_m."""
        if self.E is not None:
            return self.E
        rad_per_unit = self.omega_m_rad_s / self.omega_m
        if self.P_mW == 0:
            return 0.0
        e_si = drive_amplitude(self.P_mW * 1e-3, self.kappa * rad_per_unit, self.omega_l * rad_per_unit)
        return e_si / rad_per_unit

    def with_overrides(self, **changes) -> "PhysicalParams":
        return self.model_validate({**self.model_dump(), **changes})

    def scaled(self, s: float) -> "PhysicalParams":
        """Every rate and frequency multiplied by s (amplitudes unchanged)."""
        if s <= 0:
            raise DomainError("scale must be positive")
        rates = ("omega_m", "gamma_m", "g0_prime", "omega_c", "delta_c", "kappa",
                 "Delta_a", "gamma_a", "G", "eta")
        changes = {name: getattr(self, name) * s for name in rates}
        changes["E"] = self.resolved_E * s
        return self.with_overrides(**changes)


PRESETS: dict[str, PhysicalParams] = {
    "fig2": PhysicalParams(),
    "fig2-decoupled": PhysicalParams(G=0.0),
}


def fig2_preset() -> PhysicalParams:
    return PRESETS["fig2"]


def squeezing_parameter(eta_prime: float, omega_m: float) -> float:
    """r = 1/4 ln(1 + 4 eta'/omega_m)."""
    if omega_m <= 0:
        raise DomainError("omega_m must be positive")
    stretch = 1.0 + 4.0 * eta_prime / omega_m
    if stretch <= 0:
        raise ParametricInstabilityError(
            f"1 + 4 eta'/omega_m = {stretch:.6g} <= 0 (parametric instability)"
        )
    return 0.25 * math.log(stretch)


@dataclass(frozen=True)
class DerivedParams:
    """Mean-field dependent effective quantities of the adiabatically reduced model."""

    omega_m: float
    gamma_m: float
    gamma_a: float
    a_s: float
    b_s: float
    Delta_c_eff: float
    G0: float
    omega_m_prime: float
    omega_m_tilde: float
    G_eff: float
    eta_prime: float
    Delta_eff: float
    gamma_eff: float
    r: float
    omega_m_tilde_prime: float
    G_eff_prime: float
    Delta_G: float
    Omega_m: float
    G_g: float

    def with_delta_eff(self, delta_eff: float) -> "DerivedParams":
        """Override Delta_eff directly (detuning sweeps)."""
        return replace(self, Delta_eff=delta_eff)

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def effective_params(p: PhysicalParams, a_s: float, b_s: float) -> DerivedParams:
    """
    Effective parameters after adiabatic elimination of the cavity.

    Parameters:
    ----------
    p : PhysicalParams
        System constants
    a_s : float
        Steady cavity amplitude |<a>_s|
    b_s : float
        Steady mechanical amplitude |<b>_s|
    """
    if a_s < 0 or b_s < 0:
        raise DomainError("steady amplitudes are magnitudes and must be >= 0")
    Delta_c = p.delta_c - 2.0 * p.g0_prime * b_s
    if Delta_c == 0.0:
        raise SingularParameterError("effective cavity detuning Delta_c vanishes")
    lorentz = Delta_c ** 2 + p.kappa ** 2
    G0 = p.g0_prime * a_s

    eta_prime = p.eta - G0 ** 2 * Delta_c / lorentz
    omega_m_tilde = p.omega_m_prime - 2.0 * G0 ** 2 * Delta_c / lorentz
    G_eff = abs(G0 * p.G / (Delta_c - 1j * p.kappa))
    Delta_eff = p.Delta_a - p.G ** 2 * Delta_c / lorentz
    gamma_eff = p.gamma_a + p.G ** 2 * p.kappa / lorentz

    r = squeezing_parameter(eta_prime, p.omega_m)
    stretch = 1.0 + 4.0 * eta_prime / p.omega_m

    return DerivedParams(
        omega_m=p.omega_m,
        gamma_m=p.gamma_m,
        gamma_a=p.gamma_a,
        a_s=a_s,
        b_s=b_s,
        Delta_c_eff=Delta_c,
        G0=G0,
        omega_m_prime=p.omega_m_prime,
        omega_m_tilde=omega_m_tilde,
        G_eff=G_eff,
        eta_prime=eta_prime,
        Delta_eff=Delta_eff,
        gamma_eff=gamma_eff,
        r=r,
        omega_m_tilde_prime=p.omega_m * math.sqrt(stretch),
        G_eff_prime=G_eff * stretch ** -0.25,
        Delta_G=p.Delta_a - p.G ** 2 / Delta_c,
        Omega_m=p.omega_m + 4.0 * p.eta - 2.0 * p.g0 ** 2 * a_s ** 2 / Delta_c,
        G_g=math.sqrt(2.0) * p.g0 * a_s * p.G / Delta_c,
    )


def optimal_detuning(d: DerivedParams) -> float:
    """Resonant (anti-Stokes) condition Delta_eff = omega_m_tilde'."""
    return d.omega_m_tilde_prime


@dataclass(frozen=True)
class TransformedCoefficients:
    number: float
    parametric: float
    coupling: float


def transformed_coefficients(d: DerivedParams, r: float) -> TransformedCoefficients:
    """Coefficients of S(r)^dag H_eff S(r) for an arbitrary squeezing parameter r."""
    ch, sh = math.cosh(r), math.sinh(r)
    return TransformedCoefficients(
        number=d.omega_m_tilde * (ch ** 2 + sh ** 2) - 4.0 * d.eta_prime * ch * sh,
        parametric=-d.omega_m_tilde * ch * sh + d.eta_prime * (ch ** 2 + sh ** 2),
        coupling=d.G_eff * (ch - sh),
    )


@dataclass(frozen=True)
class SidebandReport:
    anti_stokes_detuning: float
    stokes_detuning: float
    sideband_ratio: float


def sideband_report(d: DerivedParams) -> SidebandReport:
    ratio = 2.0 * d.omega_m_tilde_prime / d.G_eff_prime if d.G_eff_prime else math.inf
    return SidebandReport(
        anti_stokes_detuning=d.omega_m_tilde_prime - d.Delta_eff,
        stokes_detuning=d.omega_m_tilde_prime + d.Delta_eff,
        sideband_ratio=ratio,
    )


def _ratio(x: float, y: float) -> float:
    return abs(x) / abs(y) if y else math.inf


@dataclass(frozen=True)
class ValidityReport:
    detuning_over_mechanics: float
    detuning_over_atoms: float
    kappa_over_gamma_m: float
    kappa_over_gamma_a: float
    threshold: float

    @property
    def valid(self) -> bool:
        return min(self.detuning_over_mechanics, self.detuning_over_atoms,
                   self.kappa_over_gamma_m, self.kappa_over_gamma_a) >= self.threshold


def validity_report(p: PhysicalParams, d: DerivedParams, threshold: float = 10.0) -> ValidityReport:
    """Regime checks |Delta_c| >> (omega_m', |Delta_a|), kappa >> (gamma_m, gamma_a)."""
    return ValidityReport(
        detuning_over_mechanics=_ratio(d.Delta_c_eff, d.omega_m_prime),
        detuning_over_atoms=_ratio(d.Delta_c_eff, p.Delta_a),
        kappa_over_gamma_m=_ratio(p.kappa, p.gamma_m),
        kappa_over_gamma_a=_ratio(p.kappa, p.gamma_a),
        threshold=threshold,
    )
