"""
Shared fixtures: the reference parameter set and its steady mean field.

Session scope keeps the integrated mean field (a few seconds of RK4) to a
single evaluation per test run.
"""
import pytest

from src.model.SystemParameters import DerivedParams, PhysicalParams, effective_params, fig2_preset
from src.service.MeanFieldService import fixed_point_mean_field, solve_steady_mean_field


@pytest.fixture(scope="session")
def preset() -> PhysicalParams:
    return fig2_preset()


@pytest.fixture(scope="session")
def preset_fixed_point(preset):
    return fixed_point_mean_field(preset)


@pytest.fixture(scope="session")
def preset_derived(preset, preset_fixed_point) -> DerivedParams:
    return effective_params(preset, preset_fixed_point.a_s, preset_fixed_point.b_s)


@pytest.fixture(scope="session")
def preset_integrated(preset):
    """(trajectory, SteadyMeanField) from integration at sampling stride 20."""
    return solve_steady_mean_field(preset, "abc", sample_every=20)
