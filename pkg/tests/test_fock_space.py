import numpy as np
import pytest

from src.exceptions import DomainError, InvalidDimensionError
from src.qcore.FockSpace import (
    HilbertSpec,
    annihilation,
    check_density_matrix,
    commutator,
    creation,
    dagger,
    embed,
    expectation,
    fock_state,
    guard_population,
    identity,
    is_hermitian,
    mode_operator,
    momentum_quadrature,
    number,
    position_quadrature,
    quadrature_variance,
    reduced_state,
    tensor,
    thermal_state,
    to_qobj,
    vacuum,
)


def test_ladder_operators_act_on_fock_states():
    b = annihilation(5)
    ket3 = np.zeros(5)
    ket3[3] = 1.0
    np.testing.assert_allclose(b @ ket3, np.sqrt(3) * np.eye(5)[2])
    np.testing.assert_allclose(creation(5), dagger(b))
    np.testing.assert_allclose(dagger(b) @ b, number(5))


def test_canonical_commutator_holds_below_truncation():
    n = 8
    c = commutator(annihilation(n), creation(n))
    np.testing.assert_allclose(c[:-1, :-1], identity(n)[:-1, :-1], atol=1e-14)
    # the top level carries the truncation artefact
    assert c[-1, -1] == pytest.approx(-(n - 1))


def test_operators_are_read_only():
    b = annihilation(3)
    with pytest.raises(ValueError):
        b[0, 1] = 2.0


@pytest.mark.parametrize("n_levels", [0, 1])
def test_too_few_levels_rejected(n_levels):
    with pytest.raises(InvalidDimensionError):
        annihilation(n_levels)


def test_vacuum_quadrature_variances_are_one_half():
    b = annihilation(10)
    rho = vacuum(10)
    assert quadrature_variance(rho, position_quadrature(b)) == pytest.approx(0.5)
    assert quadrature_variance(rho, momentum_quadrature(b)) == pytest.approx(0.5)


def test_quadratures_are_hermitian():
    b = annihilation(6)
    assert is_hermitian(position_quadrature(b))
    assert is_hermitian(momentum_quadrature(b))
    with pytest.raises(DomainError):
        quadrature_variance(vacuum(6), b)


def test_thermal_state_occupation():
    rho = thermal_state(80, 2.0)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
    assert expectation(number(80), rho).real == pytest.approx(2.0, rel=1e-6)
    np.testing.assert_allclose(thermal_state(5, 0.0), vacuum(5))
    with pytest.raises(DomainError):
        thermal_state(5, -0.1)


def test_fock_state_bounds():
    assert fock_state(4, 3)[3, 3] == 1.0
    with pytest.raises(InvalidDimensionError):
        fock_state(4, 4)


def test_hilbert_spec_layout():
    spec = HilbertSpec.three_mode((3, 4, 2))
    assert spec.dim == 24
    assert spec.slot("c") == 2
    with pytest.raises(InvalidDimensionError):
        spec.slot("d")
    with pytest.raises(ValueError):
        HilbertSpec(mode_dims=(3, 4), labels=("c", "b"))
    with pytest.raises(ValueError):
        HilbertSpec(mode_dims=(1, 4))


def test_embedded_operators_commute_across_modes():
    spec = HilbertSpec.three_mode((3, 4, 2))
    a, b, c = (mode_operator(spec, label) for label in "abc")
    assert a.shape == (24, 24)
    for x, y in ((a, b), (b, c), (a, dagger(c))):
        np.testing.assert_allclose(commutator(x, y), 0.0, atol=1e-14)
    with pytest.raises(InvalidDimensionError):
        embed(annihilation(5), 0, spec)


def test_reduced_state_of_product_state():
    spec = HilbertSpec.two_mode((4, 3))
    rho_b = thermal_state(4, 0.3)
    rho_c = fock_state(3, 1)
    rho = tensor(rho_b, rho_c)
    np.testing.assert_allclose(reduced_state(rho, spec, 0), rho_b, atol=1e-15)
    np.testing.assert_allclose(reduced_state(rho, spec, 1), rho_c, atol=1e-15)


def test_guard_population_reads_top_levels():
    spec = HilbertSpec.two_mode((5, 3))
    rho = tensor(fock_state(5, 4), vacuum(3))
    assert guard_population(rho, spec, 0) == pytest.approx(1.0)
    assert guard_population(rho, spec, 1) == pytest.approx(0.0)


def test_density_matrix_diagnostics():
    assert check_density_matrix(thermal_state(6, 1.0)).ok()
    bad = np.diag([1.2, -0.2]).astype(complex)
    report = check_density_matrix(bad)
    assert report.min_eigenvalue == pytest.approx(-0.2)
    assert not report.ok()
    with pytest.raises(InvalidDimensionError):
        expectation(number(3), vacuum(4))


def test_qobj_wrapper_carries_mode_structure():
    spec = HilbertSpec.two_mode((4, 3))
    rho = tensor(thermal_state(4, 0.3), vacuum(3))
    q = to_qobj(rho, spec)
    assert q.dims == [[4, 3], [4, 3]]
    np.testing.assert_allclose(q.full(), rho)
    with pytest.raises(InvalidDimensionError):
        to_qobj(number(5), spec)


def test_operators_match_hand_built_matrices():
    n = 4
    hand = np.diag(np.sqrt(np.arange(1, n)), k=1)
    np.testing.assert_allclose(annihilation(n), hand, atol=1e-15)
    np.testing.assert_allclose(number(n), np.diag(np.arange(n)), atol=1e-15)
    np.testing.assert_allclose(identity(n), np.eye(n))
    x = position_quadrature(annihilation(n))
    np.testing.assert_allclose(x, (hand + hand.T) / np.sqrt(2), atol=1e-15)
    # the thermal state is renormalised on the truncated space
    weights = (0.5 / 1.5) ** np.arange(n)
    np.testing.assert_allclose(np.diag(thermal_state(n, 0.5)).real, weights / weights.sum(), atol=1e-12)
