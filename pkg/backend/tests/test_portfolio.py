import re

import numpy as np
import pandas as pd
import pytest

from app.basis import enumerate_basis
from app.errors import DataError
from app.portfolio import (
    DemandModel,
    InstanceConfig,
    brute_force_solve,
    build_cost_diagonal,
    cost_of_bitstring,
    estimate_model,
    make_instance,
    participant_profile,
    penalty_diagonal,
    risk_diagonal,
)
from app.usage import UsageRecords, synth_usage


def _days(n):
    return [pd.Timestamp("2024-01-01") + pd.Timedelta(days=d) for d in range(n)]


def test_constant_usage_gives_zero_covariance():
    records = UsageRecords(usage=np.full((3, 24, 4), 0.5), days=_days(3))
    model = estimate_model(records)
    np.testing.assert_array_equal(model.mean, np.full((24, 4), 0.5))
    np.testing.assert_array_equal(model.cov, np.zeros((24, 4, 4)))


def test_estimate_matches_sample_covariance():
    records = synth_usage(2, 5, 12)
    model = estimate_model(records)
    for t in (0, 19):
        np.testing.assert_allclose(model.cov[t], np.cov(records.usage[:, t, :].T, ddof=1), atol=1e-12)
        np.testing.assert_allclose(model.mean[t], records.usage[:, t, :].mean(axis=0), atol=1e-15)


def test_estimate_needs_two_days():
    with pytest.raises(DataError):
        estimate_model(UsageRecords(usage=np.ones((1, 24, 2)), days=_days(1)))


def test_model_json_round_trip(toy_model, tmp_path):
    path = tmp_path / "model.json"
    toy_model.save(path)
    back = DemandModel.load(path)
    np.testing.assert_array_equal(back.mean, toy_model.mean)
    np.testing.assert_array_equal(back.cov, toy_model.cov)


def test_model_rejects_bad_covariance():
    mean = np.zeros((1, 2))
    with pytest.raises(DataError, match="positive semidefinite"):
        DemandModel(mean=mean, cov=np.array([[[1.0, 2.0], [2.0, 1.0]]]))
    with pytest.raises(DataError, match="symmetric"):
        DemandModel(mean=mean, cov=np.array([[[1.0, 0.5], [0.0, 1.0]]]))
    with pytest.raises(DataError):
        DemandModel.from_json('{"hours": {"0": {"mean": [1.0]}}}')


def test_participant_profile(toy_model):
    frame = participant_profile(toy_model)
    assert list(frame.columns) == ["t", "participant", "mean", "std"]
    assert len(frame) == 24 * 6
    row = frame[(frame.t == 18) & (frame.participant == 3)].iloc[0]
    assert row["std"] == pytest.approx(np.sqrt(toy_model.cov[18, 2, 2]))


def test_instance_validation(toy_model):
    with pytest.raises(ValueError):
        make_instance(4, 5, 0, 1.5)
    with pytest.raises(ValueError):
        make_instance(4, 2, 0, [1.0, 2.0])
    with pytest.raises(DataError):
        make_instance(6, 2, 22, 1.5).check_model(toy_model)
    with pytest.raises(DataError):
        make_instance(5, 2, 0, 1.5).check_model(toy_model)
    inst = make_instance(6, 2, 3, 1.5, delta=0.2)
    assert inst.times == [3, 4, 5]
    np.testing.assert_allclose(inst.p_proc, [1.4, 1.4, 1.4])


def test_two_site_costs_by_hand():
    mean = np.array([[1.0, 2.0]])
    cov = np.array([[[0.1, 0.0], [0.0, 0.2]]])
    model = DemandModel(mean=mean, cov=cov)
    inst = InstanceConfig(L=2, M=1, period_start=0, p_proc_prime=[1.5], n_times=1)
    basis = enumerate_basis(2, 1)
    assert cost_of_bitstring(inst, model, 0b01) == pytest.approx(0.35)
    assert cost_of_bitstring(inst, model, 0b10) == pytest.approx(0.45)
    oracle = brute_force_solve(inst, model, basis)
    assert oracle.E_min == pytest.approx(0.35)
    assert oracle.W_T == pytest.approx(0.1)
    assert oracle.to_dict(basis)["argmin"] == ["10"]
    with pytest.raises(ValueError):
        cost_of_bitstring(inst, model, 0b11)


def test_diagonal_matches_per_mask_cost(toy_model, toy_instance, toy_basis):
    diag = build_cost_diagonal(toy_instance, toy_model, toy_basis)
    expected = [cost_of_bitstring(toy_instance, toy_model, int(m)) for m in toy_basis.states]
    np.testing.assert_allclose(diag, expected, atol=1e-12)
    np.testing.assert_allclose(
        diag, risk_diagonal(toy_instance, toy_model, toy_basis) + penalty_diagonal(toy_instance, toy_model, toy_basis)
    )


def test_oracle_extremes_come_from_the_diagonal(toy_model, toy_instance, toy_basis):
    diag = build_cost_diagonal(toy_instance, toy_model, toy_basis)
    oracle = brute_force_solve(toy_instance, toy_model, toy_basis, diag)
    assert oracle.E_min == diag.min()
    assert oracle.E_max == diag.max()
    assert oracle.random_delta_e == pytest.approx(diag.mean() - diag.min())
    assert all(diag[toy_basis.index_of([m])[0]] == oracle.E_min for m in oracle.argmin)


def test_single_feasible_state(toy_model):
    inst = make_instance(6, 6, 18, 1.5)
    basis = enumerate_basis(6, 6)
    oracle = brute_force_solve(inst, toy_model, basis)
    assert oracle.E_min == oracle.E_max
    assert oracle.W_T == 0.0
    assert oracle.to_dict(basis)["random_delta_E_over_W"] is None


def test_basis_must_match_instance(toy_model, toy_instance):
    with pytest.raises(ValueError):
        build_cost_diagonal(toy_instance, toy_model, enumerate_basis(6, 3))


def test_model_json_floats_read_back_bit_exactly(toy_model):
    text = toy_model.to_json()
    back = DemandModel.from_json(text)
    np.testing.assert_array_equal(back.mean, toy_model.mean)
    np.testing.assert_array_equal(back.cov, toy_model.cov)
    numbers = re.findall(r"-?\d+\.\d+(?:e[-+]?\d+)?", text)
    assert numbers
    for number in numbers:
        digits = number.lstrip("-").split("e")[0].replace(".", "").lstrip("0")
        assert len(digits) <= 17


def test_relabeling_participants_permutes_the_cost_diagonal(toy_model, toy_instance, toy_basis):
    perm = np.array([3, 0, 5, 1, 4, 2])
    # participant l of the relabeled model is participant perm[l] of the original
    relabeled = DemandModel(mean=toy_model.mean[:, perm], cov=toy_model.cov[:, perm][:, :, perm])
    diag = build_cost_diagonal(toy_instance, toy_model, toy_basis)
    diag_relabeled = build_cost_diagonal(toy_instance, relabeled, toy_basis)
    original_masks = [
        sum(1 << int(perm[l]) for l in range(toy_basis.L) if (int(mask) >> l) & 1) for mask in toy_basis.states
    ]
    np.testing.assert_allclose(diag_relabeled, diag[toy_basis.index_of(original_masks)], rtol=0.0, atol=1e-12)

    oracle = brute_force_solve(toy_instance, toy_model, toy_basis, diag)
    oracle_relabeled = brute_force_solve(toy_instance, relabeled, toy_basis, diag_relabeled)
    assert oracle_relabeled.E_min == pytest.approx(oracle.E_min, abs=1e-12)
    assert oracle_relabeled.E_max == pytest.approx(oracle.E_max, abs=1e-12)
    assert oracle_relabeled.W_T == pytest.approx(oracle.W_T, abs=1e-12)
