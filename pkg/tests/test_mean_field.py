import math

import numpy as np
import pytest

from src.exceptions import DomainError, InstabilityError, InterpolationRangeError, NotSteadyError
from src.service.MeanFieldService import (
    MeanFieldState,
    MeanFieldTrajectory,
    abc_rhs,
    fixed_point_mean_field,
    integrate_meanfield_abc,
    integrate_meanfield_qpac,
    residual,
    steady_mean_field,
    steady_state,
    stiffness_dt,
)


def test_fixed_point_is_stationary(preset, preset_fixed_point):
    s = preset_fixed_point
    assert s.residual < 1e-6
    assert s.a_s == pytest.approx(3352, rel=2e-3)
    assert s.state.b.real == pytest.approx(6243, rel=2e-3)


def test_cavity_amplitude_is_dominated_by_its_real_part(preset_fixed_point):
    assert preset_fixed_point.ratio_checks["a"] == pytest.approx(38.8, rel=1e-2)
    assert preset_fixed_point.ratio_checks["a"] > 10


def test_fixed_point_formulations_agree(preset):
    abc = fixed_point_mean_field(preset, "abc")
    qpac = fixed_point_mean_field(preset, "qpac")
    assert qpac.residual < 1e-6
    assert qpac.state.q == pytest.approx(abc.state.q, rel=1e-6)
    assert abs(qpac.state.a - abc.state.a) / abc.a_s < 1e-6


def test_undriven_cavity_stays_empty(preset):
    s = fixed_point_mean_field(preset.with_overrides(P_mW=0.0))
    assert s.a_s == 0.0 and s.b_s == 0.0 and s.c_s == 0.0


def test_integrated_steady_state_matches_fixed_point(preset_integrated, preset_fixed_point):
    _, steady = preset_integrated
    assert steady.residual < 1e-6
    assert steady.a_s == pytest.approx(preset_fixed_point.a_s, rel=1e-6)
    assert steady.b_s == pytest.approx(preset_fixed_point.b_s, rel=1e-6)
    assert steady.provenance()["formulation"] == "abc"


def test_trajectory_starts_from_rest(preset_integrated):
    traj, _ = preset_integrated
    assert traj.t[0] == 0.0
    assert traj.a[0] == 0 and traj.b[0] == 0 and traj.c[0] == 0
    assert np.all(np.diff(traj.t) > 0)


def test_formulations_give_identical_trajectories_without_mirror_damping(preset):
    p = preset.with_overrides(gamma_m=0.0)
    dt = stiffness_dt(p)
    abc = integrate_meanfield_abc(p, 20.0, dt, sample_every=50)
    qpac = integrate_meanfield_qpac(p, 20.0, dt, sample_every=50)
    np.testing.assert_allclose(abc.t, qpac.t)
    scale = np.max(np.abs(abc.a))
    assert np.max(np.abs(abc.a - qpac.a)) / scale < 1e-6
    assert np.max(np.abs(abc.q - qpac.q)) / np.max(np.abs(abc.q)) < 1e-6


def test_adaptive_cross_check_agrees_with_rk4(preset):
    rk4 = integrate_meanfield_abc(preset, 5.0, sample_every=100)
    adaptive = integrate_meanfield_abc(preset, 5.0, sample_every=100, method="adaptive")
    np.testing.assert_allclose(rk4.t, adaptive.t)
    assert abs(rk4.final.a - adaptive.final.a) / abs(adaptive.final.a) < 1e-6


def test_unknown_integrator_rejected(preset):
    with pytest.raises(DomainError):
        integrate_meanfield_abc(preset, 1.0, method="euler")


def test_short_run_is_not_steady(preset):
    traj = integrate_meanfield_abc(preset, 5.0, sample_every=10)
    with pytest.raises(NotSteadyError) as exc:
        steady_state(traj)
    assert exc.value.variation > 0


def test_interpolation_inside_and_outside(preset):
    traj = integrate_meanfield_abc(preset, 2.0)
    mid = traj.at(1.0)
    assert isinstance(mid, MeanFieldState)
    assert traj.at(2.0).a == traj.final.a
    with pytest.raises(InterpolationRangeError):
        traj.at(2.5)
    with pytest.raises(InterpolationRangeError):
        traj.at(-0.1)


def test_interpolation_matches_numpy_on_any_grid(preset):
    uniform = integrate_meanfield_abc(preset, 2.0)
    irregular = MeanFieldTrajectory(np.array([0.0, 0.1, 0.5, 1.7]), np.array([0, 1 + 1j, 2, 3j]),
                                    np.array([0, 2, 4, 8], dtype=complex), np.zeros(4, dtype=complex), preset)
    for traj in (uniform, irregular):
        for t in np.linspace(traj.t[0], traj.t[-1], 37):
            mf = traj.at(float(t))
            assert mf.a.real == pytest.approx(np.interp(t, traj.t, traj.a.real), abs=1e-9 * (1 + abs(mf.a)))
            assert mf.a.imag == pytest.approx(np.interp(t, traj.t, traj.a.imag), abs=1e-9 * (1 + abs(mf.a)))
            assert mf.b.real == pytest.approx(np.interp(t, traj.t, traj.b.real), abs=1e-9 * (1 + abs(mf.b)))
    with pytest.raises(InterpolationRangeError):
        irregular.at(1.8)


def test_steady_mean_field_is_cached_and_matches_fixed_point(preset, preset_fixed_point):
    first = steady_mean_field(preset)
    assert steady_mean_field(preset) is first
    assert first.a_s == pytest.approx(preset_fixed_point.a_s, rel=1e-6)
    assert steady_mean_field(preset, "qpac").formulation == "qpac"


def test_continuation_extends_trajectory(preset):
    first = integrate_meanfield_abc(preset, 2.0, sample_every=10)
    more = integrate_meanfield_abc(preset, 4.0, initial=first.final, sample_every=10)
    joined = first.extend(more)
    assert joined.t[-1] == pytest.approx(4.0)
    assert len(joined) == len(first) + len(more) - 1


def test_parametric_instability_diverges(preset):
    p = preset.with_overrides(eta=-0.3)
    with pytest.raises(InstabilityError) as exc:
        integrate_meanfield_qpac(p, 400.0, sample_every=100)
    assert exc.value.t_blowup > 0
    with pytest.raises(DomainError):
        fixed_point_mean_field(p)


def test_residual_vanishes_only_at_steady_state(preset, preset_fixed_point):
    rest = MeanFieldState(0.0, 0j, 0j, 0j)
    assert residual(preset, rest) == pytest.approx(preset.resolved_E)
    rhs = abc_rhs(preset)
    s = preset_fixed_point.state
    assert np.max(np.abs(rhs(0.0, np.array([s.a, s.b, s.c])))) < 1e-6
    assert math.isinf(s.t)
