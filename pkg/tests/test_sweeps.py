import csv
import math
import time

import numpy as np
import pytest

from src.exceptions import DomainError, StabilityError
from src.model.SystemParameters import optimal_detuning
from src.service.SweepService import (
    SweepRow,
    cm_variance,
    coupling_grid_cm,
    detuning_axis_cm,
    eta_sweep,
    fan_out,
    parameter_sweep,
    write_sweep,
)


def test_fan_out_sorts_by_coordinates_not_completion():
    points = [{"x": float(x)} for x in (3, 1, 2, 0)]

    def evaluate(point):
        # later coordinates finish first
        time.sleep(0.01 * (4 - point["x"]))
        return SweepRow(dict(point), point["x"] ** 2)

    rows = fan_out(points, evaluate, threads=4)
    assert [r.coords["x"] for r in rows] == [0.0, 1.0, 2.0, 3.0]
    assert [r.value for r in rows] == [0.0, 1.0, 4.0, 9.0]


def test_failing_points_become_flagged_rows():
    def evaluate(point):
        if point["x"] == 1.0:
            raise StabilityError("drift not Hurwitz")
        if point["x"] == 2.0:
            raise DomainError("outside the domain")
        return SweepRow(dict(point), 0.4)

    rows = fan_out([{"x": 0.0}, {"x": 1.0}, {"x": 2.0}], evaluate, threads=1)
    assert len(rows) == 3
    ok, unstable, invalid = rows
    assert ok.converged and ok.stable
    assert math.isnan(unstable.value) and not unstable.stable and not unstable.converged
    assert "Hurwitz" in unstable.message
    assert invalid.stable and not invalid.converged


def test_write_sweep_header_and_rows(tmp_path):
    rows = [SweepRow({"eta": 0.0}, 0.36, method="reducedCM", extras={"eta_prime": 0.0}),
            SweepRow({"eta": 0.1}, math.nan, converged=False, stable=False, method="reducedCM",
                     message="unstable", extras={"eta_prime": 0.06})]
    path = write_sweep(tmp_path / "sweep.csv", rows)
    with open(path, newline="") as f:
        table = list(csv.reader(f))
    assert table[0] == ["eta", "method", "variance", "stable", "converged", "eta_prime", "message"]
    assert len(table) == 3
    assert table[2][2] == "nan"


def test_cm_variance_rejects_unknown_method(preset):
    with pytest.raises(ValueError):
        cm_variance(preset, 0.0, "wignerCM")


def test_eta_sweep_long_format(preset):
    rows = eta_sweep(preset, [0.0, 0.1, 0.2], threads=2)
    assert len(rows) == 9
    assert {r.method for r in rows} == {"fullCM", "reducedCM", "analytic"}
    assert all(r.converged for r in rows)
    eta_prime = {r.coords["eta"]: r.extras["eta_prime"] for r in rows if r.method == "analytic"}
    assert eta_prime[0.2] == pytest.approx(0.2428, abs=2e-3)
    # radiation pressure adds to the bare parametric drive
    assert eta_prime[0.0] > 0.0
    assert eta_prime[0.0] < eta_prime[0.1] < eta_prime[0.2]


def test_full_model_departs_from_analytic_as_eta_grows(preset):
    rows = eta_sweep(preset, [0.2, 0.4], methods=("fullCM", "analytic"))
    value = {(r.coords["eta"], r.method): r.value for r in rows}

    def deviation(eta):
        return abs(value[(eta, "fullCM")] - value[(eta, "analytic")]) / value[(eta, "analytic")]

    assert deviation(0.4) > deviation(0.2)


def test_coupling_grid_finds_squeezing_beyond_unit_kappa(preset):
    rows = coupling_grid_cm(preset, kappas=[2.0, 4.0], Gs=[4.0, 8.0], threads=2)
    assert len(rows) == 4
    assert [(r.coords["kappa"], r.coords["G"]) for r in rows] == [(2.0, 4.0), (2.0, 8.0), (4.0, 4.0), (4.0, 8.0)]
    assert any(r.value < 0.5 for r in rows if r.stable)


@pytest.mark.parametrize("n_m", [0.0, 1.0, 3.0])
def test_detuning_minimum_sits_at_optimal_detuning(preset_derived, n_m):
    grid = np.linspace(0.9, 1.9, 51)
    rows = detuning_axis_cm(preset_derived, grid, n_m)
    values = np.array([r.value for r in rows])
    best = rows[int(np.argmin(values))].coords["Delta_eff"]
    assert best == pytest.approx(optimal_detuning(preset_derived), abs=0.1)


def test_thermal_noise_never_improves_squeezing(preset_derived):
    grid = np.linspace(0.9, 1.9, 11)
    curves = [np.array([r.value for r in detuning_axis_cm(preset_derived, grid, n_m)]) for n_m in (0.0, 1.0, 3.0)]
    assert np.all(curves[1] >= curves[0])
    assert np.all(curves[2] >= curves[1])


def test_parameter_sweep(preset):
    rows = parameter_sweep(preset, "P_mW", [10.0, 20.0])
    assert [r.coords["P_mW"] for r in rows] == [10.0, 20.0]
    assert all(r.method == "reducedCM" for r in rows)
    with pytest.raises(ValueError):
        parameter_sweep(preset, "not_a_field", [1.0])
