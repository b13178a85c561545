import numpy as np
import pytest

from app.basis import (
    StateVector,
    apply_boundary_hop,
    apply_diagonal_phase,
    apply_hop_pair,
    apply_local_phase,
    dicke_state,
    enumerate_basis,
    expectation_diagonal,
    probabilities,
    slater_state,
)


def _random_state(basis, seed=0):
    rng = np.random.default_rng(seed)
    amps = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
    return StateVector(basis, amps / np.linalg.norm(amps))


@pytest.mark.parametrize("L,M,dim", [(5, 2, 10), (6, 3, 20), (20, 5, 15504), (4, 0, 1), (4, 4, 1)])
def test_enumerate_basis_dimension_and_order(L, M, dim):
    basis = enumerate_basis(L, M)
    assert basis.dim == dim
    assert np.all(np.diff(basis.states) > 0)
    popcounts = [bin(int(s)).count("1") for s in basis.states]
    assert set(popcounts) == {M}


def test_enumerate_basis_rejects_bad_shapes():
    with pytest.raises(ValueError):
        enumerate_basis(4, 5)
    with pytest.raises(ValueError):
        enumerate_basis(0, 0)
    with pytest.raises(ValueError):
        enumerate_basis(12, 3, max_sites=10)


def test_index_of_and_bitstring():
    basis = enumerate_basis(5, 2)
    np.testing.assert_array_equal(basis.index_of(basis.states), np.arange(basis.dim))
    with pytest.raises(ValueError):
        basis.index_of([0b111])
    assert basis.bitstring(0b00101) == "10100"
    assert basis.occupations.shape == (10, 5)
    np.testing.assert_array_equal(basis.occupied_sites[0], [0, 1])


def test_dicke_state_is_uniform_and_normalized():
    basis = enumerate_basis(6, 2)
    state = dicke_state(basis)
    np.testing.assert_allclose(probabilities(state), np.full(15, 1 / 15))
    assert state.norm() == pytest.approx(1.0, abs=1e-14)


def test_slater_state_checks_orbitals():
    basis = enumerate_basis(4, 2)
    with pytest.raises(ValueError):
        slater_state(basis, np.ones((4, 2)))
    with pytest.raises(ValueError):
        slater_state(basis, np.eye(4)[:, :3])


def test_slater_state_of_site_orbitals_is_a_basis_state():
    basis = enumerate_basis(4, 2)
    state = slater_state(basis, np.eye(4)[:, [0, 2]])
    target = basis.index_of([0b0101])[0]
    assert abs(state.amps[target]) == pytest.approx(1.0)
    assert state.norm() == pytest.approx(1.0)


def test_hop_pair_validation():
    state = dicke_state(enumerate_basis(4, 2))
    with pytest.raises(ValueError):
        apply_hop_pair(state, 0, 2, 0.3)
    with pytest.raises(ValueError):
        apply_hop_pair(state, 3, 4, 0.3)


def test_boundary_hop_validation():
    with pytest.raises(ValueError):
        apply_boundary_hop(dicke_state(enumerate_basis(2, 1)), 0.3, 1)
    with pytest.raises(ValueError):
        apply_boundary_hop(dicke_state(enumerate_basis(4, 2)), 0.3, 1)


def test_zero_angle_operators_are_identity():
    basis = enumerate_basis(5, 2)
    state = _random_state(basis)
    before = state.amps.copy()
    apply_hop_pair(state, 1, 2, 0.0)
    apply_boundary_hop(state, 0.0, 2)
    apply_local_phase(state, np.arange(5.0), 0.0)
    apply_diagonal_phase(state, np.arange(basis.dim, dtype=float), 0.0)
    np.testing.assert_array_equal(state.amps, before)


def test_hop_pair_moves_a_single_fermion():
    basis = enumerate_basis(3, 1)
    amps = np.zeros(3, dtype=complex)
    amps[basis.index_of([0b001])[0]] = 1.0
    state = apply_hop_pair(StateVector(basis, amps), 0, 1, np.pi / 2)
    moved = basis.index_of([0b010])[0]
    assert state.amps[moved] == pytest.approx(1j)


@pytest.mark.parametrize("M", [4, 5])
def test_boundary_sign_product_is_always_positive(M):
    basis = enumerate_basis(20, M)
    signs = basis.boundary_signs
    assert len(signs) > 0
    np.testing.assert_array_equal(signs, np.ones_like(signs))


def test_unitary_layers_preserve_norm():
    basis = enumerate_basis(8, 3)
    state = _random_state(basis, 3)
    rng = np.random.default_rng(4)
    for _ in range(10):
        apply_diagonal_phase(state, rng.random(basis.dim), rng.normal())
        for a in range(7):
            apply_hop_pair(state, a, a + 1, rng.normal())
        apply_boundary_hop(state, rng.normal(), 3)
        apply_local_phase(state, rng.random(8), rng.normal())
    assert state.norm() == pytest.approx(1.0, abs=1e-12)


def test_diagonal_phase_leaves_probabilities_and_expectation():
    basis = enumerate_basis(5, 2)
    state = _random_state(basis, 1)
    diag = np.linspace(0.0, 1.0, basis.dim)
    before = expectation_diagonal(state, diag)
    apply_diagonal_phase(state, diag, 0.7)
    assert expectation_diagonal(state, diag) == pytest.approx(before, abs=1e-14)
    with pytest.raises(ValueError):
        apply_diagonal_phase(state, diag[:-1], 0.1)


def test_global_phase_leaves_probabilities():
    basis = enumerate_basis(4, 2)
    a = _random_state(basis, 2)
    b = StateVector(basis, np.exp(0.4j) * a.amps)
    np.testing.assert_allclose(probabilities(b), probabilities(a), atol=1e-14)
    assert abs(np.vdot(a.amps, b.amps)) == pytest.approx(1.0)
