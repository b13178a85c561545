import numpy as np
import pytest

from app.ansatz import (
    AnsatzParams,
    Variant,
    apply_mixer,
    build_problem,
    objective,
    prepare_initial,
    run_ansatz,
)
from app.basis import StateVector, enumerate_basis, probabilities
from app.hf import calibrate_t_hop, hf_iterate
from app.portfolio import brute_force_solve, build_cost_diagonal, estimate_model, make_instance
from app.usage import synth_usage


def test_variant_values():
    assert [v.value for v in Variant] == ["xy-qaoa", "fqaoa", "fqaoa-sclfm"]
    assert Variant("fqaoa-sclfm") is Variant.FQAOA_SCLFM
    assert Variant.XY_QAOA.label == "XY-QAOA"


def test_params_vector_layout():
    params = AnsatzParams(gamma=[0.1, 0.2], beta=[0.3, 0.4])
    np.testing.assert_array_equal(params.to_vector(), [0.1, 0.2, 0.3, 0.4])
    back = AnsatzParams.from_vector(params.to_vector())
    np.testing.assert_array_equal(back.gamma, params.gamma)
    assert back.p == 2
    with pytest.raises(ValueError):
        AnsatzParams(gamma=[0.1], beta=[0.1, 0.2])
    with pytest.raises(ValueError):
        AnsatzParams.from_vector([0.1, 0.2, 0.3])


def test_xy_initial_state_is_dicke(toy_instance, toy_basis):
    state = prepare_initial(Variant.XY_QAOA, toy_instance, toy_basis)
    np.testing.assert_allclose(state.amps, np.full(15, 1 / np.sqrt(15)))


def test_fqaoa_two_site_ground_state():
    inst = make_instance(2, 1, 0, 1.0)
    basis = enumerate_basis(2, 1)
    state = prepare_initial(Variant.FQAOA, inst, basis, t_hop=1.0)
    np.testing.assert_allclose(np.abs(state.amps), [1 / np.sqrt(2)] * 2)
    assert state.amps[0] == pytest.approx(state.amps[1])


def test_sclfm_needs_hf(toy_instance, toy_basis):
    with pytest.raises(ValueError):
        prepare_initial(Variant.FQAOA_SCLFM, toy_instance, toy_basis)


def test_sclfm_without_fields_equals_fqaoa(toy_model, balanced_instance, toy_basis):
    t_hop = calibrate_t_hop(balanced_instance, toy_model, toy_basis)
    hf = hf_iterate(balanced_instance, toy_model, t_hop)
    fq = prepare_initial(Variant.FQAOA, balanced_instance, toy_basis, t_hop=t_hop)
    sc = prepare_initial(Variant.FQAOA_SCLFM, balanced_instance, toy_basis, hf=hf, t_hop=t_hop)
    np.testing.assert_allclose(sc.amps, fq.amps, atol=1e-14)

    params = AnsatzParams(gamma=[0.4, 1.1], beta=[0.7, -0.2])
    a = run_ansatz(Variant.FQAOA, params, balanced_instance, toy_basis, toy_model, hf, t_hop)
    b = run_ansatz(Variant.FQAOA_SCLFM, params, balanced_instance, toy_basis, toy_model, hf, t_hop)
    np.testing.assert_allclose(a.amps, b.amps, atol=1e-13)


def test_zero_beta_mixer_is_identity(toy_basis):
    rng = np.random.default_rng(0)
    amps = rng.normal(size=toy_basis.dim) + 0j
    state = StateVector(toy_basis, amps / np.linalg.norm(amps))
    before = state.amps.copy()
    apply_mixer(Variant.FQAOA_SCLFM, state, 0.0, 1.3, rng.normal(size=6), 2)
    np.testing.assert_array_equal(state.amps, before)


def test_level_zero_and_zero_angles_keep_the_initial_state(toy_model, toy_instance, toy_basis):
    t_hop = calibrate_t_hop(toy_instance, toy_model, toy_basis)
    initial = prepare_initial(Variant.FQAOA, toy_instance, toy_basis, t_hop=t_hop)
    for params in (AnsatzParams.zeros(0), AnsatzParams.zeros(3)):
        state = run_ansatz(Variant.FQAOA, params, toy_instance, toy_basis, toy_model, None, t_hop)
        np.testing.assert_allclose(state.amps, initial.amps, atol=1e-15)


def test_objective_bounded_by_oracle(toy_model, toy_instance, toy_basis):
    t_hop = calibrate_t_hop(toy_instance, toy_model, toy_basis)
    hf = hf_iterate(toy_instance, toy_model, t_hop, alpha=0.3, max_iter=50)
    diag = build_cost_diagonal(toy_instance, toy_model, toy_basis)
    oracle = brute_force_solve(toy_instance, toy_model, toy_basis, diag)
    rng = np.random.default_rng(2)
    for variant in Variant:
        problem = build_problem(variant, toy_instance, toy_model, toy_basis, t_hop, hf=hf, diag=diag)
        for _ in range(5):
            params = AnsatzParams(gamma=rng.normal(size=2) * 5, beta=rng.normal(size=2) * 5)
            energy = problem.objective(params)
            assert oracle.E_min - 1e-12 <= energy <= oracle.E_max + 1e-12
            assert probabilities(problem.evolve(params)).sum() == pytest.approx(1.0, abs=1e-12)


def test_level_zero_xy_is_the_uniform_mean(toy_model, toy_instance, toy_basis):
    diag = build_cost_diagonal(toy_instance, toy_model, toy_basis)
    initial = prepare_initial(Variant.XY_QAOA, toy_instance, toy_basis)
    value = objective(Variant.XY_QAOA, AnsatzParams.zeros(0), diag, initial, 1.0)
    assert value == pytest.approx(diag.mean(), abs=1e-12)


def test_problem_energy_takes_a_flat_vector(toy_model, toy_instance, toy_basis):
    problem = build_problem(Variant.XY_QAOA, toy_instance, toy_model, toy_basis, 0.5)
    params = AnsatzParams(gamma=[0.3], beta=[0.2])
    assert problem.energy(params.to_vector()) == problem.objective(params)
    assert problem.fields is None
    with pytest.raises(ValueError):
        build_problem(Variant.FQAOA_SCLFM, toy_instance, toy_model, toy_basis, 0.5)


def test_sclfm_problem_freezes_fields(toy_model, toy_instance, toy_basis):
    hf = hf_iterate(toy_instance, toy_model, 0.5, max_iter=5)
    problem = build_problem(Variant.FQAOA_SCLFM, toy_instance, toy_model, toy_basis, 0.5, hf=hf)
    np.testing.assert_array_equal(problem.fields, hf.local_fields)
    assert not problem.fields.flags.writeable


def test_full_size_evolution_preserves_norm():
    model = estimate_model(synth_usage(4, 20, 6))
    inst = make_instance(20, 5, 18, 1.5)
    basis = enumerate_basis(20, 5)
    t_hop = calibrate_t_hop(inst, model, basis)
    hf = hf_iterate(inst, model, t_hop, max_iter=20)
    problem = build_problem(Variant.FQAOA_SCLFM, inst, model, basis, t_hop, hf=hf)
    rng = np.random.default_rng(9)
    params = AnsatzParams(gamma=rng.normal(size=10), beta=rng.normal(size=10))
    state = problem.evolve(params)
    assert state.norm() == pytest.approx(1.0, abs=1e-12)
    assert probabilities(state).sum() == pytest.approx(1.0, abs=1e-12)
    assert abs(np.vdot(state.amps, state.amps)) == pytest.approx(1.0, abs=1e-12)
