"""Full 2^L reference built from explicit Jordan-Wigner Pauli strings.

Only meant for L <= 10: it checks the signs and the subspace restriction of
the operators in `app.basis`. Full-space index = occupation mask.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import List, Sequence, Union

import numpy as np
from scipy.linalg import expm

from .basis import OccupationBasis

MAX_DENSE_SITES = 10

_I = np.eye(2)
_Z = np.diag([1.0, -1.0])
# |0> empty, |1> occupied; (X + iY)/2 maps |1> -> |0>
_LOWER = np.array([[0.0, 1.0], [0.0, 0.0]])


def _check_sites(L: int) -> None:
    if L > MAX_DENSE_SITES:
        raise ValueError(f"dense reference is limited to L <= {MAX_DENSE_SITES}, got L={L}")


def _kron_sites(ops: Sequence[np.ndarray]) -> np.ndarray:
    # site 0 is the least significant bit, so it is the rightmost kron factor
    return reduce(np.kron, list(reversed(ops)))


def annihilation(L: int, site: int) -> np.ndarray:
    _check_sites(L)
    ops = [_Z] * site + [_LOWER] + [_I] * (L - site - 1)
    return _kron_sites(ops)


def number_operator(L: int, site: int) -> np.ndarray:
    c = annihilation(L, site)
    return c.T @ c


def hop_operator(L: int, a: int, b: int) -> np.ndarray:
    """c_a^dag c_b + c_b^dag c_a."""
    ca = annihilation(L, a)
    cb = annihilation(L, b)
    return ca.T @ cb + cb.T @ ca


def one_body_operator(h: np.ndarray) -> np.ndarray:
    """sum_ab h_ab c_a^dag c_b for a real L x L matrix h."""
    h = np.asarray(h, dtype=float)
    L = h.shape[0]
    cs = [annihilation(L, l) for l in range(L)]
    out = np.zeros((2**L, 2**L))
    for a in range(L):
        for b in range(L):
            if h[a, b] != 0.0:
                out += h[a, b] * (cs[a].T @ cs[b])
    return out


@dataclass(frozen=True)
class HopTerm:
    """exp[i theta sign (c_a^dag c_b + h.c.)]"""

    a: int
    b: int
    theta: float
    sign: float = 1.0


@dataclass(frozen=True)
class BoundaryTerm:
    """exp[i theta (-1)^(M-1) (c_L^dag c_1 + h.c.)]"""

    theta: float
    M: int


@dataclass(frozen=True)
class NumberTerm:
    """exp(-i beta sum_l I_l n_l)"""

    fields: tuple
    beta: float


@dataclass(frozen=True)
class DiagonalTerm:
    """exp(-i gamma D) for a diagonal D given over all 2^L masks."""

    diag: tuple
    gamma: float


DenseTerm = Union[HopTerm, BoundaryTerm, NumberTerm, DiagonalTerm]


def _term_unitary(L: int, term: DenseTerm) -> np.ndarray:
    if isinstance(term, HopTerm):
        return expm(1j * term.theta * term.sign * hop_operator(L, term.a, term.b))
    if isinstance(term, BoundaryTerm):
        sign = (-1.0) ** (term.M - 1)
        return expm(1j * term.theta * sign * hop_operator(L, L - 1, 0))
    if isinstance(term, NumberTerm):
        fields = np.asarray(term.fields, dtype=float)
        gen = sum(fields[l] * number_operator(L, l) for l in range(L))
        return np.diag(np.exp(-1j * term.beta * np.diag(gen)))
    if isinstance(term, DiagonalTerm):
        diag = np.asarray(term.diag, dtype=float)
        if diag.shape != (2**L,):
            raise ValueError("diagonal term must cover all 2^L masks")
        return np.diag(np.exp(-1j * term.gamma * diag))
    raise TypeError(f"unknown dense term {term!r}")


def dense_reference_apply(L: int, terms: List[DenseTerm], full_state: np.ndarray) -> np.ndarray:
    """Apply `terms` in list order (first element acts first) to a 2^L vector."""
    _check_sites(L)
    psi = np.asarray(full_state, dtype=np.complex128).copy()
    if psi.shape != (2**L,):
        raise ValueError(f"full state must have length {2**L}")
    for term in terms:
        psi = _term_unitary(L, term) @ psi
    return psi


def embed(basis: OccupationBasis, amps: np.ndarray) -> np.ndarray:
    _check_sites(basis.L)
    full = np.zeros(2**basis.L, dtype=np.complex128)
    full[basis.states] = amps
    return full


def restrict(basis: OccupationBasis, full: np.ndarray) -> np.ndarray:
    return np.asarray(full)[basis.states]


def dense_slater(L: int, orbitals: np.ndarray) -> np.ndarray:
    """b_1^dag ... b_M^dag |vac> with b_k^dag = sum_l orbitals[l, k] c_l^dag."""
    _check_sites(L)
    orbitals = np.asarray(orbitals, dtype=float)
    creators = [annihilation(L, l).T for l in range(L)]
    psi = np.zeros(2**L, dtype=np.complex128)
    psi[0] = 1.0
    for k in reversed(range(orbitals.shape[1])):
        op = sum(orbitals[l, k] * creators[l] for l in range(L))
        psi = op @ psi
    return psi
