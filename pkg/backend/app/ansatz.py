"""Layered ansatz evolution for the three solver variants.

A level-p state is
    U_m(beta_p) U_p(gamma_p) ... U_m(beta_1) U_p(gamma_1) |init>
with U_p(gamma) = exp(-i gamma H_cost) and the mixer
    U_m(beta) = U_I(beta) U_BC(beta) U_odd(beta) U_even(beta)
acting right to left. Hop layers rotate with theta = beta * t_hop.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .basis import (
    OccupationBasis,
    StateVector,
    apply_boundary_hop,
    apply_diagonal_phase,
    apply_hop_pair,
    apply_local_phase,
    dicke_state,
    expectation_diagonal,
    slater_state,
)
from .hf import HFSolution, build_one_body, sp_eigensolve
from .portfolio import DemandModel, InstanceConfig, build_cost_diagonal

logger = logging.getLogger("negawatt.ansatz")


class Variant(str, Enum):
    XY_QAOA = "xy-qaoa"
    FQAOA = "fqaoa"
    FQAOA_SCLFM = "fqaoa-sclfm"

    @property
    def label(self) -> str:
        return {"xy-qaoa": "XY-QAOA", "fqaoa": "FQAOA", "fqaoa-sclfm": "FQAOA-SCLFM"}[self.value]


@dataclass
class AnsatzParams:
    gamma: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float).reshape(-1)
        self.beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if self.gamma.shape != self.beta.shape:
            raise ValueError(f"gamma and beta must have equal length, got {len(self.gamma)} and {len(self.beta)}")

    @property
    def p(self) -> int:
        return int(self.gamma.shape[0])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.gamma, self.beta])

    @staticmethod
    def from_vector(vector: np.ndarray) -> "AnsatzParams":
        vector = np.asarray(vector, dtype=float).reshape(-1)
        if vector.shape[0] % 2:
            raise ValueError("parameter vector must hold gamma and beta halves of equal length")
        p = vector.shape[0] // 2
        return AnsatzParams(gamma=vector[:p].copy(), beta=vector[p:].copy())

    @staticmethod
    def zeros(p: int) -> "AnsatzParams":
        return AnsatzParams(gamma=np.zeros(p), beta=np.zeros(p))

    def to_dict(self) -> dict:
        return {"gamma": self.gamma.tolist(), "beta": self.beta.tolist()}


def bare_ring_orbitals(L: int, M: int, t_hop: float) -> np.ndarray:
    """M lowest orbitals of the bare ring; a vanishing t_hop falls back to unit coupling."""
    w, v = sp_eigensolve(build_one_body(t_hop if t_hop > 0 else 1.0, np.zeros(L), M).matrix)
    return v[:, :M]


def prepare_initial(
    variant: Variant,
    instance: InstanceConfig,
    basis: OccupationBasis,
    hf: Optional[HFSolution] = None,
    t_hop: float = 1.0,
) -> StateVector:
    if basis.L != instance.L or basis.M != instance.M:
        raise ValueError("basis does not match the instance")
    variant = Variant(variant)
    if variant is Variant.XY_QAOA:
        return dicke_state(basis)
    if variant is Variant.FQAOA:
        return slater_state(basis, bare_ring_orbitals(basis.L, basis.M, t_hop))
    if hf is None:
        raise ValueError("FQAOA-SCLFM needs a Hartree-Fock solution for its initial state")
    return slater_state(basis, hf.orbitals)


def apply_mixer(
    variant: Variant,
    state: StateVector,
    beta: float,
    t_hop: float,
    fields: Optional[np.ndarray],
    M: int,
) -> StateVector:
    """U_even, then U_odd, then U_BC, then U_I (SCLFM only), in place."""
    L = state.basis.L
    theta = beta * t_hop
    # 1-based pairs (2,3), (4,5), ... are the even layer
    for a in range(1, L - 1, 2):
        apply_hop_pair(state, a, a + 1, theta)
    for a in range(0, L - 1, 2):
        apply_hop_pair(state, a, a + 1, theta)
    if L >= 3:
        apply_boundary_hop(state, theta, M)
    if Variant(variant) is Variant.FQAOA_SCLFM and fields is not None:
        apply_local_phase(state, fields, beta)
    return state


def evolve(
    variant: Variant,
    params: AnsatzParams,
    initial: StateVector,
    diag: np.ndarray,
    t_hop: float,
    fields: Optional[np.ndarray] = None,
) -> StateVector:
    state = initial.copy()
    for gamma, beta in zip(params.gamma, params.beta):
        apply_diagonal_phase(state, diag, gamma)
        apply_mixer(variant, state, beta, t_hop, fields, state.basis.M)
    return state


def run_ansatz(
    variant: Variant,
    params: AnsatzParams,
    instance: InstanceConfig,
    basis: OccupationBasis,
    model: DemandModel,
    hf: Optional[HFSolution],
    t_hop: float,
    diag: Optional[np.ndarray] = None,
) -> StateVector:
    if diag is None:
        diag = build_cost_diagonal(instance, model, basis)
    initial = prepare_initial(variant, instance, basis, hf, t_hop)
    fields = hf.local_fields if (hf is not None and Variant(variant) is Variant.FQAOA_SCLFM) else None
    return evolve(variant, params, initial, diag, t_hop, fields)


def objective(
    variant: Variant,
    params: AnsatzParams,
    diag: np.ndarray,
    initial: StateVector,
    t_hop: float,
    fields: Optional[np.ndarray] = None,
) -> float:
    """Cost expectation <psi(gamma, beta)| H_cost |psi(gamma, beta)>."""
    return expectation_diagonal(evolve(variant, params, initial, diag, t_hop, fields), diag)


@dataclass(frozen=True)
class AnsatzProblem:
    """Everything an objective evaluation needs; shared read-only across restarts."""

    variant: Variant
    basis: OccupationBasis
    diag: np.ndarray
    initial: StateVector
    t_hop: float
    fields: Optional[np.ndarray] = None

    def evolve(self, params: AnsatzParams) -> StateVector:
        return evolve(self.variant, params, self.initial, self.diag, self.t_hop, self.fields)

    def objective(self, params: AnsatzParams) -> float:
        return objective(self.variant, params, self.diag, self.initial, self.t_hop, self.fields)

    def energy(self, vector: np.ndarray) -> float:
        return self.objective(AnsatzParams.from_vector(vector))


def build_problem(
    variant: Variant,
    instance: InstanceConfig,
    model: DemandModel,
    basis: OccupationBasis,
    t_hop: float,
    hf: Optional[HFSolution] = None,
    diag: Optional[np.ndarray] = None,
) -> AnsatzProblem:
    variant = Variant(variant)
    if diag is None:
        diag = build_cost_diagonal(instance, model, basis)
    initial = prepare_initial(variant, instance, basis, hf, t_hop)
    fields = None
    if variant is Variant.FQAOA_SCLFM:
        fields = np.asarray(hf.local_fields, dtype=float).copy()
        fields.setflags(write=False)
    diag = np.asarray(diag, dtype=float)
    logger.debug("Built %s problem for T=%d (dim=%d, t_hop=%.4g)", variant.label, instance.period_start, basis.dim, t_hop)
    return AnsatzProblem(variant=variant, basis=basis, diag=diag, initial=initial, t_hop=t_hop, fields=fields)
