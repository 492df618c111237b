import math

import pytest
from pydantic import ValidationError

from src.exceptions import DomainError, ParametricInstabilityError, SingularParameterError
from src.model.SystemParameters import (
    PRESETS,
    drive_amplitude,
    effective_params,
    optimal_detuning,
    sideband_report,
    squeezing_parameter,
    transformed_coefficients,
    validity_report,
)


def test_drive_amplitude_of_reference_setup(preset):
    assert preset.resolved_E == pytest.approx(1.0737e6, rel=1e-3)


def test_drive_amplitude_domain():
    assert drive_amplitude(0.0, 1.0, 1.0) == 0.0
    with pytest.raises(DomainError):
        drive_amplitude(-1e-3, 1.0, 1.0)
    with pytest.raises(DomainError):
        drive_amplitude(1e-3, 0.0, 1.0)


def test_explicit_E_overrides_power(preset):
    assert preset.with_overrides(E=42.0).resolved_E == 42.0
    assert preset.with_overrides(P_mW=0.0).resolved_E == 0.0


def test_params_are_validated(preset):
    with pytest.raises(ValidationError):
        preset.with_overrides(kappa=-1.0)
    with pytest.raises(ValidationError):
        preset.with_overrides(unknown=1.0)
    with pytest.raises(ValidationError):
        preset.with_overrides(eta=math.inf)


def test_derived_parameters_of_reference_setup(preset_derived):
    d = preset_derived
    assert d.a_s == pytest.approx(3352, rel=2e-3)
    assert d.Delta_c_eff == pytest.approx(-262.49, rel=1e-3)
    assert d.G0 == pytest.approx(3.352, rel=2e-3)
    assert d.eta_prime == pytest.approx(0.2428, rel=5e-3)
    assert d.Delta_eff == pytest.approx(1.344, rel=5e-3)
    assert d.gamma_eff == pytest.approx(0.1028, rel=5e-3)
    assert d.G_eff == pytest.approx(0.102, rel=1e-2)


def test_optimal_detuning_near_one_point_four(preset_derived):
    assert 1.35 <= optimal_detuning(preset_derived) <= 1.45


def test_sideband_ratio(preset_derived):
    report = sideband_report(preset_derived)
    assert 28 <= report.sideband_ratio <= 36
    assert report.stokes_detuning - report.anti_stokes_detuning == pytest.approx(2 * preset_derived.Delta_eff)


def test_squeezing_transformation_removes_parametric_term(preset_derived):
    d = preset_derived
    coeffs = transformed_coefficients(d, d.r)
    assert coeffs.parametric == pytest.approx(0.0, abs=1e-12)
    assert coeffs.number == pytest.approx(d.omega_m_tilde_prime, rel=1e-12)
    assert coeffs.coupling == pytest.approx(d.G_eff_prime, rel=1e-12)
    # r = 0 leaves the Hamiltonian unchanged
    assert transformed_coefficients(d, 0.0).parametric == pytest.approx(d.eta_prime)


def test_squeezing_parameter_domain():
    assert squeezing_parameter(0.0, 1.0) == 0.0
    assert squeezing_parameter(0.5, 1.0) == pytest.approx(0.25 * math.log(3.0))
    with pytest.raises(ParametricInstabilityError):
        squeezing_parameter(-0.3, 1.0)
    with pytest.raises(DomainError):
        squeezing_parameter(0.1, 0.0)


def test_decoupled_atoms_give_zero_effective_coupling(preset_fixed_point):
    p = PRESETS["fig2-decoupled"]
    d = effective_params(p, preset_fixed_point.a_s, preset_fixed_point.b_s)
    assert d.G_eff == 0.0
    assert d.Delta_eff == p.Delta_a
    assert d.gamma_eff == p.gamma_a


def test_vanishing_cavity_detuning_is_singular(preset):
    p = preset.with_overrides(delta_c=0.0)
    with pytest.raises(SingularParameterError):
        effective_params(p, 10.0, 0.0)
    with pytest.raises(DomainError):
        effective_params(preset, -1.0, 0.0)


def test_validity_regime(preset, preset_derived):
    report = validity_report(preset, preset_derived)
    assert report.valid
    assert report.detuning_over_mechanics > 100
    bad = validity_report(preset.with_overrides(kappa=0.5), preset_derived)
    assert not bad.valid


def test_unit_scaling_keeps_amplitudes(preset):
    scaled = preset.scaled(2.0)
    assert scaled.omega_m == 2.0
    assert scaled.delta_c == 2 * preset.delta_c
    assert scaled.resolved_E == pytest.approx(2 * preset.resolved_E)
    with pytest.raises(DomainError):
        preset.scaled(0.0)
