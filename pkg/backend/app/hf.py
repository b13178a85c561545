"""Hartree-Fock driver with self-consistent local fields.

The bare driver is a ring of hops -t_hop between neighbouring sites; the bond
closing the ring carries bc_sign = (-1)^(M-1) (periodic for odd M,
anti-periodic for even M). The HF driver adds on-site fields I_l that come
from linearizing the procurement penalty around the current density.

The SCF loop works on ensembles: the current state is a convex mixture of
Slater determinants, summarized by its site densities n and its hopping
energy c. Its energy c + (1/N_T) sum_t (P_tot[t] - P'_t)^2 never increases
from one iteration to the next. When the Fermi level of the self-consistent
driver is degenerate the minimizer is a fractional ensemble, and plain
aufbau iterations flip between the neighbouring determinants forever.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import eigh
from scipy.optimize import minimize

from .basis import OccupationBasis
from .portfolio import DemandModel, InstanceConfig, risk_diagonal

logger = logging.getLogger("negawatt.hf")

SYMMETRY_TOL = 1e-12
FERMI_TIE_TOL = 1e-12
SIGN_TOL = 1e-10
DENSITY_MATCH_TOL = 1e-8
FEASIBLE_TOL = 1e-9
# HOMO-LUMO splitting below which a vanishing energy gap marks a fractional ensemble
FRACTIONAL_FERMI_TOL = 1e-4
MIXTURE_WINDOW = 10


@dataclass
class HopMatrix:
    matrix: np.ndarray
    t_hop: float
    bc_sign: float


def boundary_sign(M: int) -> float:
    return 1.0 if (M - 1) % 2 == 0 else -1.0


def ring_hopping(L: int, t_hop: float, M: int) -> HopMatrix:
    h = np.zeros((L, L))
    for l in range(L - 1):
        h[l, l + 1] = h[l + 1, l] = -t_hop
    bc = boundary_sign(M)
    # with two sites the closing bond is the same bond
    if L >= 3:
        h[0, L - 1] = h[L - 1, 0] = -t_hop * bc
    return HopMatrix(matrix=h, t_hop=t_hop, bc_sign=bc)


def build_one_body(t_hop: float, fields: np.ndarray, M: int) -> HopMatrix:
    fields = np.asarray(fields, dtype=float)
    ring = ring_hopping(len(fields), t_hop, M)
    ring.matrix = ring.matrix + np.diag(fields)
    return ring


def sp_eigensolve(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors of a real symmetric matrix.

    Each eigenvector is signed so that its first component with magnitude above
    1e-10 is positive.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("eigensolve needs a square matrix")
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL:
        raise ValueError("eigensolve needs a symmetric matrix")
    w, v = eigh(a)
    for k in range(v.shape[1]):
        nz = np.nonzero(np.abs(v[:, k]) > SIGN_TOL)[0]
        if len(nz) and v[nz[0], k] < 0:
            v[:, k] = -v[:, k]
    return w, v


def hop_spectral_range(L: int, M: int) -> float:
    """Range of the unit-coupling ring over M-fermion Slater states."""
    w, _ = sp_eigensolve(ring_hopping(L, 1.0, M).matrix)
    return float(w[-M:].sum() - w[:M].sum()) if M else 0.0


def calibrate_t_hop(instance: InstanceConfig, model: DemandModel, basis: OccupationBasis) -> float:
    """t_hop such that the hopping range matches the range of the risk term."""
    r_hop = hop_spectral_range(instance.L, instance.M)
    if r_hop <= 0.0:
        raise ValueError(f"hopping range vanishes for L={instance.L}, M={instance.M}")
    risk = risk_diagonal(instance, model, basis)
    r_risk = float(risk.max() - risk.min())
    t_hop = r_risk / r_hop
    logger.info("Calibrated t_hop=%.6g (risk range %.6g, unit hop range %.6g)", t_hop, r_risk, r_hop)
    return t_hop


def local_fields(instance: InstanceConfig, model: DemandModel, p_tot_hf: np.ndarray) -> np.ndarray:
    """I_l = (2/N_T) sum_t (P_tot^HF[t] - P'_t) mean[t, l]."""
    p_tot_hf = np.asarray(p_tot_hf, dtype=float)
    excess = p_tot_hf - instance.p_proc_prime
    return (2.0 / instance.n_times) * (excess @ instance.period_means(model))


def procurement_penalty(instance: InstanceConfig, model: DemandModel, density: np.ndarray) -> float:
    """(1/N_T) sum_t (P_tot[t] - P'_t)^2 for the totals of a site density."""
    p_tot = instance.period_means(model) @ np.asarray(density, dtype=float)
    return float(np.mean((p_tot - instance.p_proc_prime) ** 2))


def hopping_energy(orbitals: np.ndarray, t_hop: float, M: int) -> float:
    orbitals = np.asarray(orbitals, dtype=float)
    hop = ring_hopping(orbitals.shape[0], t_hop, M).matrix
    return float(np.trace(orbitals.T @ hop @ orbitals))


def hf_energy(
    instance: InstanceConfig,
    model: DemandModel,
    density: Optional[np.ndarray],
    orbitals: np.ndarray,
    t_hop: float,
) -> float:
    """<Slater(orbitals)| H_HF |Slater(orbitals)>, constant term included.

    P_tot^HF is taken from the Slater state's own occupations, which turns the
    field and constant terms into the quadratic penalty of those occupations.
    `density`, when given, must be that occupation profile.
    """
    orbitals = np.asarray(orbitals, dtype=float)
    occupation = np.sum(orbitals**2, axis=1)
    if density is not None:
        density = np.asarray(density, dtype=float)
        if density.shape != occupation.shape or np.max(np.abs(density - occupation)) > DENSITY_MATCH_TOL:
            raise ValueError("density does not match the occupations of the orbitals")
    return hopping_energy(orbitals, t_hop, instance.M) + procurement_penalty(instance, model, occupation)


@dataclass
class HFSolution:
    density: np.ndarray
    orbitals: np.ndarray
    eigenvalues: np.ndarray
    local_fields: np.ndarray
    p_tot_hf: np.ndarray
    energy: float
    iterations: int
    converged: bool
    degenerate_fermi: bool = False
    alpha: float = 0.5
    energy_gap: float = 0.0
    trace: List[Tuple[int, float, float, float]] = field(default_factory=list)

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.trace, columns=["iteration", "E_HF", "mean_P_tot_HF", "max_density_delta"])


def initial_density(L: int, M: int, mode: Literal["uniform", "inverse-requests"] = "uniform") -> np.ndarray:
    if mode == "uniform":
        return np.full(L, M / L)
    if mode == "inverse-requests":
        return np.full(L, 1.0 / M)
    raise ValueError(f"unknown initial density mode '{mode}'")


def best_mixture(hopping: np.ndarray, totals: np.ndarray, p_prime: np.ndarray, n_times: int) -> np.ndarray:
    """Simplex weights w minimizing sum_j w_j c_j + (1/N_T) |sum_j w_j P_j - P'|^2.

    Column j of `totals` holds the P_tot profile of generator j and hopping[j]
    its hopping energy. The result never scores worse than all weight on
    generator 0.
    """
    hopping = np.asarray(hopping, dtype=float)
    totals = np.asarray(totals, dtype=float)
    m = hopping.shape[0]
    start = np.zeros(m)
    start[0] = 1.0
    if m == 1:
        return start

    def energy(w: np.ndarray) -> float:
        r = totals @ w - p_prime
        return float(hopping @ w + r @ r / n_times)

    def gradient(w: np.ndarray) -> np.ndarray:
        return hopping + (2.0 / n_times) * (totals.T @ (totals @ w - p_prime))

    res = minimize(
        energy,
        start,
        jac=gradient,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * m,
        constraints=({"type": "eq", "fun": lambda w: np.sum(w) - 1.0, "jac": lambda w: np.ones_like(w)},),
        options={"ftol": 1e-15, "maxiter": 200},
    )
    w = np.clip(np.nan_to_num(res.x, nan=0.0), 0.0, None)
    total = w.sum()
    if total <= 0.0:
        return start
    w = w / total
    return w if energy(w) <= energy(start) else start


@dataclass
class _Ensemble:
    """Site densities and hopping energy of a convex mixture of Slater determinants."""

    density: np.ndarray
    hopping: float


def _line_minimum(
    current: _Ensemble, vertex: _Ensemble, fields: np.ndarray, means: np.ndarray
) -> _Ensemble:
    """Exact energy minimum on the segment from the current ensemble to `vertex`."""
    dn = vertex.density - current.density
    slope = (vertex.hopping - current.hopping) + float(fields @ dn)
    curvature = float(np.mean((means @ dn) ** 2))
    if slope >= 0.0:
        step = 0.0
    elif curvature <= 0.0:
        step = 1.0
    else:
        step = min(1.0, -slope / (2.0 * curvature))
    return _Ensemble(current.density + step * dn, current.hopping + step * (vertex.hopping - current.hopping))


def _mixing_target(
    current: _Ensemble,
    vertices: Deque[_Ensemble],
    fields: np.ndarray,
    means: np.ndarray,
    p_prime: np.ndarray,
    n_times: int,
) -> _Ensemble:
    """Lowest-energy mixture of the current ensemble and the stored aufbau states."""

    def energy(e: _Ensemble) -> float:
        return e.hopping + float(np.mean((means @ e.density - p_prime) ** 2))

    line = _line_minimum(current, vertices[-1], fields, means)
    generators = [current, *vertices]
    densities = np.array([g.density for g in generators])
    hopping = np.array([g.hopping for g in generators])
    w = best_mixture(hopping, means @ densities.T, p_prime, n_times)
    mixed = _Ensemble(w @ densities, float(w @ hopping))
    return mixed if energy(mixed) <= energy(line) else line


def hf_iterate(
    instance: InstanceConfig,
    model: DemandModel,
    t_hop: float,
    alpha: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 500,
    init: Literal["uniform", "inverse-requests"] = "uniform",
    density0: Optional[np.ndarray] = None,
    window: int = MIXTURE_WINDOW,
) -> HFSolution:
    """Self-consistent field loop with energy-optimal damped mixing.

    Each iteration diagonalizes the one-body matrix built from the current
    ensemble density n and fills the M lowest orbitals. The aufbau state joins
    a window of recent states; the next ensemble moves a fraction alpha of the
    way towards the lowest-energy mixture of the current ensemble and that
    window (Pulay-style subspace mixing with an exact line search as fallback).

    Converged when max |n_out - n| <= tol, or when the Fermi level is
    degenerate and the energy gap Tr(F P) - (sum of the M lowest levels),
    an upper bound on the distance to the minimum, is <= tol. The returned
    orbitals, fields, totals and energy all belong to the returned density.

    A seed density that is not a feasible ensemble (entries outside [0, 1] or
    sum != M, e.g. the inverse-requests start) only sets the first fields.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"mixing parameter must lie in (0, 1], got {alpha}")
    if window < 1:
        raise ValueError(f"mixing window must be positive, got {window}")
    L, M = instance.L, instance.M
    means = instance.period_means(model)
    p_prime = instance.p_proc_prime
    n_times = instance.n_times
    n = initial_density(L, M, init) if density0 is None else np.asarray(density0, dtype=float).copy()
    if n.shape != (L,):
        raise ValueError(f"initial density must have length {L}, got {n.shape}")

    def evaluate(density: np.ndarray):
        p_tot = means @ density
        fields = local_fields(instance, model, p_tot)
        w, v = sp_eigensolve(build_one_body(t_hop, fields, M).matrix)
        return p_tot, fields, w, v[:, :M]

    # a diagonal density matrix has no hopping energy
    current = _Ensemble(n, 0.0)
    feasible = abs(n.sum() - M) <= FEASIBLE_TOL and n.min() >= -FEASIBLE_TOL and n.max() <= 1.0 + FEASIBLE_TOL
    if not feasible:
        _, _, _, orbitals = evaluate(n)
        current = _Ensemble(np.sum(orbitals**2, axis=1), hopping_energy(orbitals, t_hop, M))

    vertices: Deque[_Ensemble] = deque(maxlen=window)
    trace: List[Tuple[int, float, float, float]] = []
    converged = False
    fractional = False
    iterations = 0
    for it in range(max_iter):
        n = current.density
        p_tot, fields, w, orbitals = evaluate(n)
        n_out = np.sum(orbitals**2, axis=1)
        energy = current.hopping + float(np.mean((p_tot - p_prime) ** 2))
        delta = float(np.max(np.abs(n_out - n)))
        gap = max(0.0, current.hopping + float(fields @ n) - float(w[:M].sum()))
        splitting = float(w[M] - w[M - 1]) if 0 < M < L else np.inf
        trace.append((it, energy, float(p_tot.mean()), delta))
        iterations = it + 1
        logger.debug(
            "HF iter %d: E_HF=%.12g mean P_tot=%.6g delta=%.3e gap=%.3e", it, energy, p_tot.mean(), delta, gap
        )
        if delta <= tol:
            converged = True
            break
        if gap <= tol and splitting <= FRACTIONAL_FERMI_TOL:
            converged = fractional = True
            break
        vertices.append(_Ensemble(n_out, hopping_energy(orbitals, t_hop, M)))
        target = _mixing_target(current, vertices, fields, means, p_prime, n_times)
        current = _Ensemble(
            (1.0 - alpha) * n + alpha * target.density,
            (1.0 - alpha) * current.hopping + alpha * target.hopping,
        )

    if not converged:
        n = current.density
        p_tot, fields, w, orbitals = evaluate(n)
        energy = current.hopping + float(np.mean((p_tot - p_prime) ** 2))
        gap = max(0.0, current.hopping + float(fields @ n) - float(w[:M].sum()))

    degenerate = bool(fractional or (0 < M < L and abs(w[M] - w[M - 1]) <= FERMI_TIE_TOL))
    if degenerate:
        logger.warning(
            "Degenerate Fermi level at T=%d (lambda_M - lambda_M+1 = %.3e), fractional ensemble",
            instance.period_start, w[M] - w[M - 1],
        )
    if converged:
        logger.info(
            "HF converged at T=%d in %d iterations (alpha=%.2f, E_HF=%.8g)",
            instance.period_start, iterations, alpha, energy,
        )
    else:
        logger.warning(
            "HF did not converge at T=%d within %d iterations (alpha=%.2f, last delta=%.3e, gap=%.3e)",
            instance.period_start, max_iter, alpha, trace[-1][3] if trace else float("nan"), gap,
        )
    return HFSolution(
        density=n,
        orbitals=orbitals,
        eigenvalues=w,
        local_fields=fields,
        p_tot_hf=p_tot,
        energy=energy,
        iterations=iterations,
        converged=converged,
        degenerate_fermi=degenerate,
        alpha=alpha,
        energy_gap=gap,
        trace=trace,
    )
