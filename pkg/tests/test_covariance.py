from dataclasses import replace

import numpy as np
import pytest
from scipy.linalg import solve_continuous_lyapunov

from src.exceptions import DomainError, InvalidDimensionError, SingularParameterError, StabilityError
from src.model.SystemParameters import effective_params
from src.service.CovarianceService import (
    CovarianceState,
    DiffusionMatrix,
    DriftMatrix,
    TrajectoryDrift,
    analytic_variance,
    diffusion_effective,
    diffusion_full,
    diffusion_reduced,
    drift_effective,
    drift_full,
    drift_reduced,
    evolve_covariance,
    evolve_covariance_cointegrated,
    initial_covariance,
    lyapunov_residual,
    lyapunov_steady,
    reduced_drift,
    stability_report,
)
from src.service.MeanFieldService import fixed_point_mean_field, integrate_meanfield_abc, stiffness_dt


@pytest.fixture(scope="module")
def full_steady(preset):
    state = fixed_point_mean_field(preset, "qpac").state
    return lyapunov_steady(drift_full(preset, state), diffusion_full(preset, 0.0))


@pytest.fixture(scope="module")
def reduced_steady(preset_derived):
    d = preset_derived
    return lyapunov_steady(reduced_drift(d), diffusion_reduced(d, 0.0))


def test_drifts_follow_their_sparsity_patterns(preset, preset_derived, preset_fixed_point):
    state = fixed_point_mean_field(preset, "qpac").state
    assert drift_full(preset, state).matches_pattern()
    assert reduced_drift(preset_derived).matches_pattern()
    assert drift_effective(preset_derived).matches_pattern()
    assert drift_reduced(preset, preset_fixed_point).matches_pattern()


def test_shape_and_sign_checks():
    with pytest.raises(InvalidDimensionError):
        DriftMatrix(np.zeros((4, 4)), "full")
    with pytest.raises(DomainError):
        DiffusionMatrix(np.diag([1.0, -1.0]))
    with pytest.raises(DomainError):
        DiffusionMatrix(np.ones((2, 2)))
    with pytest.raises(DomainError):
        initial_covariance(-1.0)


def test_lyapunov_matches_scipy(preset_derived):
    B = reduced_drift(preset_derived)
    D = diffusion_reduced(preset_derived, 1.0)
    V = lyapunov_steady(B, D).V
    reference = solve_continuous_lyapunov(B.entries, -D.entries)
    np.testing.assert_allclose(V, reference, rtol=1e-8, atol=1e-12)
    assert lyapunov_residual(B.entries, V, D.entries) < 1e-10


def test_steady_states_are_physical(full_steady, reduced_steady):
    for state in (full_steady, reduced_steady):
        assert state.symmetry_defect == 0.0
        assert state.physicality_margin >= -1e-8
        assert state.is_physical()
        assert state.var_q * state.var_p >= 0.25 - 1e-8


def test_reduced_model_is_squeezed(reduced_steady):
    assert reduced_steady.var_q < 0.5
    assert reduced_steady.var_q == pytest.approx(0.36, abs=0.03)


def test_full_and_reduced_models_agree(full_steady, reduced_steady):
    assert full_steady.var_q == pytest.approx(reduced_steady.var_q, rel=0.05)


def test_effective_covariance_is_squeezed(preset_derived):
    state = lyapunov_steady(drift_effective(preset_derived), diffusion_effective(preset_derived, 0.0))
    assert state.var_q < 0.5
    assert state.is_physical()


@pytest.mark.parametrize("eta", [0.0, 0.1, 0.2, 0.3, 0.4])
def test_closed_form_matches_lyapunov_without_mirror_damping(preset, eta):
    p = preset.with_overrides(gamma_m=0.0, eta=eta)
    s = fixed_point_mean_field(p)
    d = effective_params(p, s.a_s, s.b_s)
    V = lyapunov_steady(reduced_drift(d), diffusion_reduced(d, 0.0)).V
    assert analytic_variance(d) == pytest.approx(V[0, 0], rel=1e-6)


def test_closed_form_singularity(preset_derived):
    with pytest.raises(SingularParameterError):
        analytic_variance(replace(preset_derived, Delta_G=0.0))


def test_non_hurwitz_drift_has_no_steady_state():
    B = DriftMatrix(np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.1, 0.0, 0.0],
        [0.0, 0.0, -0.1, 1.0],
        [0.0, 0.0, -1.0, -0.1],
    ]), "reduced")
    assert not stability_report(B).hurwitz
    with pytest.raises(StabilityError):
        lyapunov_steady(B, DiffusionMatrix(np.diag([0.0, 1.0, 1.0, 1.0])))


def test_thermal_oscillator_covariance():
    # damped oscillator in contact with a bath: V = (n + 1/2) I
    B = DriftMatrix(np.array([
        [-0.2, 1.0, 0.0, 0.0],
        [-1.0, -0.2, 0.0, 0.0],
        [0.0, 0.0, -0.5, 0.3],
        [0.0, 0.0, -0.3, -0.5],
    ]), "effective")
    n = 2.0
    D = DiffusionMatrix(np.diag([0.2 * (2 * n + 1)] * 2 + [0.5] * 2))
    V = lyapunov_steady(B, D).V
    np.testing.assert_allclose(np.diag(V), [n + 0.5, n + 0.5, 0.5, 0.5], rtol=1e-10)


def test_time_evolution_relaxes_to_lyapunov(preset_derived):
    A = drift_effective(preset_derived)
    D = diffusion_effective(preset_derived, 1.0)
    result = evolve_covariance(A, D, initial_covariance(1.0, 2), t_final=300.0)
    target = lyapunov_steady(A, D).var_q
    assert result.steady_var_q == pytest.approx(target, rel=1e-3)
    assert result.physical
    assert result.min_uncertainty >= 0.25 - 1e-8
    assert result.series.names == ["V11", "V22", "margin"]


def test_steady_value_averages_the_tail_window():
    # slowly decaying rotation of a squeezed mirror next to a fast damped mode
    A = np.zeros((4, 4))
    A[:2, :2] = [[-0.01, 1.0], [-1.0, -0.01]]
    A[2:, 2:] = [[-0.5, 0.3], [-0.3, -0.5]]
    D = DiffusionMatrix(np.diag([0.01, 0.01, 0.5, 0.5]))
    V0 = CovarianceState(np.diag([2.0, 0.125, 0.5, 0.5]), 0.0)
    result = evolve_covariance(DriftMatrix(A, "effective"), D, V0, t_final=20.0)
    tail = result.series.tail(0.1).column("V11")
    assert result.steady_var_q == pytest.approx(float(tail.mean()))
    assert abs(result.steady_var_q - result.final.V[0, 0]) > 0.1
    assert not result.converged


def test_evolution_checks_sizes(preset_derived):
    with pytest.raises(InvalidDimensionError):
        evolve_covariance(drift_effective(preset_derived), diffusion_effective(preset_derived, 0.0),
                          initial_covariance(0.0, 3), t_final=1.0)


def test_full_evolution_matches_reduced_steady(preset, reduced_steady):
    state = fixed_point_mean_field(preset, "qpac").state
    result = evolve_covariance(drift_full(preset, state), diffusion_full(preset, 0.0),
                               initial_covariance(0.0, 3), t_final=150.0)
    assert result.converged
    assert result.steady_var_q == pytest.approx(reduced_steady.var_q, rel=0.05)


@pytest.mark.slow
def test_time_dependent_drift_reaches_the_same_steady_state(preset, full_steady):
    traj = integrate_meanfield_abc(preset, 400.0)
    result = evolve_covariance(TrajectoryDrift(preset, traj), diffusion_full(preset, 0.0),
                               initial_covariance(0.0, 3), t_final=400.0)
    assert result.physical
    assert result.steady_var_q == pytest.approx(full_steady.var_q, rel=0.05)


def test_cointegrated_track_agrees_with_interpolated_drift(preset):
    short = 20.0
    traj = integrate_meanfield_abc(preset, short, dt=stiffness_dt(preset, 0.05))
    interpolated = evolve_covariance(TrajectoryDrift(preset, traj), diffusion_full(preset, 0.0),
                                     initial_covariance(0.0, 3), t_final=short)
    together = evolve_covariance_cointegrated(preset, 0.0, t_final=short)
    assert together.steady_var_q == pytest.approx(interpolated.steady_var_q, rel=5e-3)
    mf = together.extras["mean_field"]
    assert abs(mf.a - traj.final.a) / abs(traj.final.a) < 1e-3
