"""Statevector simulation inside the fixed particle-number subspace.

Site l (0-based in code, l+1 in the usual 1..L labelling) is bit l of a mask.
Basis states are |x> = prod_l (c_l^dag)^{x_l} |vac> with site 0 leftmost, so
the Jordan-Wigner string of site l runs over sites 0..l-1. Adjacent hops carry
no string; only the boundary hop between site L-1 and site 0 does.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import chain, combinations
from typing import Dict, Tuple

import numpy as np
from scipy.special import comb

MAX_SITES = 28
ORTHONORMAL_TOL = 1e-10


class OccupationBasis:
    """All L-bit masks with exactly M set bits, strictly increasing as integers.

    Immutable after construction; the pair-index cache only memoizes derived data.
    """

    def __init__(self, L: int, M: int, states: np.ndarray):
        self.L = int(L)
        self.M = int(M)
        self.states = np.asarray(states, dtype=np.int64)
        self.states.setflags(write=False)
        self._pairs: Dict[Tuple[int, int], Tuple[np.ndarray, np.ndarray]] = {}

    def __repr__(self) -> str:
        return f"OccupationBasis(L={self.L}, M={self.M}, dim={self.dim})"

    @property
    def dim(self) -> int:
        return int(self.states.shape[0])

    @cached_property
    def occupations(self) -> np.ndarray:
        """dim x L matrix of 0/1 occupation numbers."""
        bits = (self.states[:, None] >> np.arange(self.L, dtype=np.int64)) & 1
        return bits.astype(np.int8)

    @cached_property
    def occupied_sites(self) -> np.ndarray:
        """dim x M matrix of occupied site indices, increasing along each row."""
        rows, cols = np.nonzero(self.occupations)
        return cols.reshape(self.dim, self.M)

    @cached_property
    def index_map(self) -> Dict[int, int]:
        return {int(s): i for i, s in enumerate(self.states)}

    def index_of(self, masks) -> np.ndarray:
        masks = np.asarray(masks, dtype=np.int64)
        idx = np.searchsorted(self.states, masks)
        clipped = np.minimum(idx, self.dim - 1)
        if not np.all(self.states[clipped] == masks):
            raise ValueError("mask outside the occupation basis")
        return idx

    def pair_indices(self, a: int, b: int) -> Tuple[np.ndarray, np.ndarray]:
        """Indices (ix, iy) of masks with site a occupied and b empty, and of the
        masks obtained by moving that fermion from a to b."""
        key = (a, b)
        cached = self._pairs.get(key)
        if cached is None:
            s = self.states
            sel = (((s >> a) & 1) == 1) & (((s >> b) & 1) == 0)
            ix = np.nonzero(sel)[0]
            iy = self.index_of(s[ix] ^ ((1 << a) | (1 << b)))
            cached = (ix, iy)
            self._pairs[key] = cached
        return cached

    @cached_property
    def boundary_signs(self) -> np.ndarray:
        """Sign product (-1)^(M-1) * (-1)^(#occupied strictly between the ends)
        for every pair coupled by the boundary hop. All entries are +1."""
        ix, _ = self.pair_indices(0, self.L - 1)
        between = self.occupations[ix, 1 : self.L - 1].sum(axis=1)
        return ((-1.0) ** (self.M - 1)) * ((-1.0) ** between)

    def bitstring(self, mask: int) -> str:
        """Site-1-first label, e.g. '10100' for sites 1 and 3 occupied."""
        return "".join("1" if (int(mask) >> l) & 1 else "0" for l in range(self.L))


@dataclass
class StateVector:
    basis: OccupationBasis
    amps: np.ndarray

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=np.complex128)
        if self.amps.shape != (self.basis.dim,):
            raise ValueError(
                f"amplitude vector has shape {self.amps.shape}, basis dimension is {self.basis.dim}"
            )

    def norm(self) -> float:
        return float(np.vdot(self.amps, self.amps).real)

    def copy(self) -> "StateVector":
        return StateVector(self.basis, self.amps.copy())


def enumerate_basis(L: int, M: int, max_sites: int = MAX_SITES) -> OccupationBasis:
    if L < 1:
        raise ValueError(f"site count must be positive, got L={L}")
    if not 0 <= M <= L:
        raise ValueError(f"fermion count M={M} out of range 0..{L}")
    if L > max_sites:
        raise ValueError(f"L={L} exceeds the dimension guard of {max_sites} sites")
    dim = comb(L, M, exact=True)
    if M == 0:
        return OccupationBasis(L, M, np.zeros(1, dtype=np.int64))
    flat = np.fromiter(chain.from_iterable(combinations(range(L), M)), dtype=np.int64, count=dim * M)
    masks = np.left_shift(np.int64(1), flat.reshape(dim, M)).sum(axis=1)
    return OccupationBasis(L, M, np.sort(masks))


def dicke_state(basis: OccupationBasis) -> StateVector:
    return StateVector(basis, np.full(basis.dim, 1.0 / np.sqrt(basis.dim), dtype=np.complex128))


def slater_state(basis: OccupationBasis, orbitals: np.ndarray) -> StateVector:
    """Amplitude of x = det of the rows of `orbitals` at the occupied sites of x."""
    orbitals = np.asarray(orbitals, dtype=float)
    if orbitals.shape != (basis.L, basis.M):
        raise ValueError(f"orbitals must be {basis.L}x{basis.M}, got {orbitals.shape}")
    overlap = orbitals.T @ orbitals
    if np.max(np.abs(overlap - np.eye(basis.M)), initial=0.0) > ORTHONORMAL_TOL:
        raise ValueError("orbital columns are not orthonormal")
    sub = orbitals[basis.occupied_sites]
    return StateVector(basis, np.linalg.det(sub).astype(np.complex128))


def _check_diag(state: StateVector, diag: np.ndarray) -> np.ndarray:
    diag = np.asarray(diag, dtype=float)
    if diag.shape != (state.basis.dim,):
        raise ValueError(f"diagonal has length {diag.shape}, basis dimension is {state.basis.dim}")
    return diag


def _rotate(amps: np.ndarray, ix: np.ndarray, iy: np.ndarray, theta: float, sign=1.0) -> None:
    c = np.cos(theta)
    s = 1j * np.sin(theta) * sign
    ax = amps[ix]
    ay = amps[iy]
    amps[ix] = c * ax + s * ay
    amps[iy] = s * ax + c * ay


def apply_diagonal_phase(state: StateVector, diag: np.ndarray, gamma: float) -> StateVector:
    diag = _check_diag(state, diag)
    state.amps *= np.exp(-1j * gamma * diag)
    return state


def apply_hop_pair(state: StateVector, l: int, l2: int, theta: float) -> StateVector:
    """exp[i theta (c_l^dag c_l2 + h.c.)] for adjacent sites l2 = l + 1."""
    if l2 != l + 1 or l < 0 or l2 >= state.basis.L:
        raise ValueError(f"hop pair ({l}, {l2}) is not an adjacent pair of sites")
    ix, iy = state.basis.pair_indices(l, l2)
    _rotate(state.amps, ix, iy, theta)
    return state


def apply_boundary_hop(state: StateVector, theta: float, M: int) -> StateVector:
    """exp[i theta (-1)^(M-1) (c_L^dag c_1 + h.c.)], including the Jordan-Wigner string."""
    basis = state.basis
    if basis.L < 3:
        raise ValueError("boundary hop needs at least 3 sites")
    if M != basis.M:
        raise ValueError(f"fermion count {M} does not match the basis (M={basis.M})")
    ix, iy = basis.pair_indices(0, basis.L - 1)
    _rotate(state.amps, ix, iy, theta, basis.boundary_signs)
    return state


def apply_local_phase(state: StateVector, fields: np.ndarray, beta: float) -> StateVector:
    fields = np.asarray(fields, dtype=float)
    if fields.shape != (state.basis.L,):
        raise ValueError(f"fields must have length {state.basis.L}, got {fields.shape}")
    state.amps *= np.exp(-1j * beta * (state.basis.occupations @ fields))
    return state


def probabilities(state: StateVector) -> np.ndarray:
    return np.abs(state.amps) ** 2


def expectation_diagonal(state: StateVector, diag: np.ndarray) -> float:
    diag = _check_diag(state, diag)
    return float(probabilities(state) @ diag)
