import csv
import json

import pytest

from main import main
from src.exceptions import ConfigSchemaError, UnknownExperimentError
from src.runner.ExperimentRunner import derived_report, jsonable, run
from src.runner.RunConfig import GridAxis, load_run_config, validate_run_config
from src.tools.ExperimentTools import EXPERIMENTS, get_experiment

EXPECTED_IDS = {"fig2", "fig3", "fig4", "fig5", "fig7", "fig8", "fig9", "fig10", "fig11", "sweep-custom"}


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_toml_and_json(tmp_path):
    toml = _write(tmp_path / "run.toml", """
experiment = "fig10"
preset = "fig2"
n_m = [0.5]

[params]
kappa = 4.0

[grid.eta]
start = 0.0
stop = 0.2
count = 3
""")
    config = load_run_config(toml)
    assert config.experiment == "fig10"
    assert config.axis("eta", []) == [0.0, 0.1, 0.2]
    assert config.physical_params().kappa == 4.0

    js = _write(tmp_path / "run.json", json.dumps({"experiment": "fig2", "integrator": {"t_final": 50.0}}))
    assert load_run_config(js).integrator.t_final == 50.0


def test_schema_errors_carry_the_field_path(tmp_path):
    with pytest.raises(ConfigSchemaError) as info:
        validate_run_config({"experiment": "fig2", "colour": "red"})
    assert info.value.field_path == "colour"

    with pytest.raises(ConfigSchemaError) as info:
        validate_run_config({"experiment": "fig2", "integrator": {"dt": -1.0}})
    assert info.value.field_path == "integrator.dt"

    config = validate_run_config({"experiment": "fig2", "params": {"kappa": -1.0}})
    with pytest.raises(ConfigSchemaError) as info:
        config.physical_params()
    assert info.value.field_path == "params.kappa"

    with pytest.raises(ConfigSchemaError):
        validate_run_config({"experiment": "fig2", "params": {"warp": 9.0}})
    with pytest.raises(ConfigSchemaError):
        validate_run_config({"experiment": "fig2", "preset": "nope"})
    with pytest.raises(ConfigSchemaError):
        validate_run_config({"experiment": "fig2", "truncation": [1, 4]})
    with pytest.raises(ConfigSchemaError):
        load_run_config(_write(tmp_path / "run.yaml", "experiment: fig2"))
    with pytest.raises(ConfigSchemaError):
        load_run_config(tmp_path / "missing.toml")


def test_grid_axis_resolution():
    assert GridAxis(start=1.0, stop=2.0, count=5).resolve() == [1.0, 1.25, 1.5, 1.75, 2.0]
    assert GridAxis(values=[3.0, 1.0]).resolve() == [3.0, 1.0]
    assert GridAxis(start=0.7).resolve() == [0.7]
    with pytest.raises(ValueError):
        GridAxis().resolve()


def test_cli_overrides_keep_unset_fields_unset():
    config = validate_run_config({"experiment": "fig7", "integrator": {"method": "adaptive"}})
    changed = config.with_cli_overrides(threads=3, truncation=[20, 6], t_final=30.0, dt=None, output_dir=None)
    assert changed.threads == 3
    assert changed.truncation == [20, 6]
    assert changed.integrator.t_final == 30.0
    assert changed.integrator.method == "adaptive"
    assert "n_m" not in changed.model_fields_set


def test_experiment_registry():
    assert set(EXPERIMENTS) == EXPECTED_IDS
    assert get_experiment("fig10").func.__name__ == "etaSweep"
    with pytest.raises(UnknownExperimentError):
        get_experiment("fig6")


def test_jsonable_sanitizes_non_finite_values():
    out = jsonable({"a": float("inf"), "b": [float("nan"), 1], "c": 1 + 2j})
    assert out == {"a": "inf", "b": ["nan", 1], "c": {"re": 1.0, "im": 2.0}}


def test_eta_run_writes_table_and_manifest(tmp_path):
    def once(out):
        config = validate_run_config({
            "experiment": "fig10",
            "grid": {"eta": {"values": [0.0, 0.2]}},
            "output_dir": str(out),
        })
        return run(config)

    first = once(tmp_path / "a")
    assert first.converged
    assert [f.name for f in first.files] == ["fig10_eta.csv"]
    with open(first.files[0], newline="") as f:
        table = list(csv.reader(f))
    assert table[0] == ["eta", "eta_prime", "fullCM", "reducedCM", "analytic", "stable", "converged"]
    assert [float(row[0]) for row in table[1:]] == [0.0, 0.2]
    assert all(row[-2:] == ["true", "true"] for row in table[1:])

    manifest = json.loads(first.manifest.read_text(encoding="utf-8"))
    assert manifest["experiment"] == "fig10"
    assert manifest["files"] == ["fig10_eta.csv"]
    assert manifest["params"]["E_resolved"] > 1e6

    second = once(tmp_path / "b")
    assert second.files[0].read_bytes() == first.files[0].read_bytes()


def test_custom_sweep_requires_a_parameter(tmp_path):
    config = validate_run_config({"experiment": "sweep-custom", "output_dir": str(tmp_path)})
    with pytest.raises(ConfigSchemaError) as info:
        run(config)
    assert info.value.field_path == "sweep_param"


def test_derived_report_for_the_preset():
    report = derived_report(validate_run_config({"experiment": "fig2"}))
    assert 1.35 <= report["optimal_detuning"] <= 1.45
    assert 28.0 <= report["sideband"]["sideband_ratio"] <= 36.0
    assert report["validity"]["valid"]
    assert report["provenance"]["fixed_point_deviation"] < 1e-6
    assert abs(report["squeezed_frame"]["parametric"]) < 1e-12


def test_derived_report_without_atom_coupling():
    report = derived_report(validate_run_config({"experiment": "fig2", "params": {"G": 0.0}}))
    assert report["derived"]["G_eff"] == 0.0
    assert report["sideband"]["sideband_ratio"] == "inf"


def test_cli_exit_codes(tmp_path):
    assert main(["list-experiments"]) == 0
    bad = _write(tmp_path / "bad.toml", 'experiment = "fig2"\nwarp = 1\n')
    assert main(["run", str(bad)]) == 2
    unknown = _write(tmp_path / "unknown.toml", 'experiment = "fig6"\n')
    assert main(["run", str(unknown), "--out", str(tmp_path)]) == 2


def test_covariance_dynamics_reports_reduction_agreement(tmp_path):
    config = validate_run_config({
        "experiment": "fig9",
        "integrator": {"t_final": 5.0},
        "output_dir": str(tmp_path),
    })
    summary = run(config).summary
    assert summary["agreement_tolerance"] == pytest.approx(0.05)
    assert 0.0 < summary["relative_difference"] <= summary["agreement_tolerance"]
    assert summary["reduction_agrees"]


def test_equivalence_run_completes_at_small_truncation(tmp_path):
    config = validate_run_config({
        "experiment": "fig11",
        "method": "me",
        "truncation": [3, 4, 3],
        "integrator": {"t_final": 6.0},
        "output_dir": str(tmp_path),
    })
    result = run(config)
    steady = tmp_path / "fig11_steady.csv"
    assert steady in result.files
    with open(steady, newline="") as f:
        tracks = [row[0] for row in csv.reader(f)][1:]
    assert tracks == ["cm_approx", "cm_exact", "reduced_cm", "effective_cm", "me_approx", "me_exact"]
    assert set(result.summary["unconverged_tracks"]) <= set(tracks)
    assert "me_exact" in result.diagnostics
    assert result.diagnostics["me_exact"].get("error") is None
