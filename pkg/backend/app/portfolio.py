from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

from .basis import OccupationBasis
from .errors import DataError
from .usage import UsageRecords

logger = logging.getLogger("negawatt.portfolio")

PSD_TOL = -1e-9
MAX_ORACLE_DIM = 10**7


@dataclass
class DemandModel:
    """mean[t, l] = E[p_{t,l}] (kWh), cov[t, l, l'] = sigma_{t,l,l'} (kWh^2)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        H, L = self.mean.shape
        if self.cov.shape != (H, L, L):
            raise DataError(f"covariance must be {H}x{L}x{L}, got {self.cov.shape}")
        if not np.allclose(self.cov, np.swapaxes(self.cov, 1, 2), rtol=0.0, atol=1e-12):
            raise DataError("covariance matrices must be symmetric")
        worst = float(np.linalg.eigvalsh(self.cov).min()) if H else 0.0
        if worst < PSD_TOL:
            raise DataError(f"covariance is not positive semidefinite (eigenvalue {worst:.3e})")

    @property
    def hours(self) -> int:
        return int(self.mean.shape[0])

    @property
    def participants(self) -> int:
        return int(self.mean.shape[1])

    def to_json(self) -> str:
        """Floats are written as Python repr, the shortest text that reads back to the
        same double (never more than 17 significant digits)."""
        payload = {
            "participants": self.participants,
            "hours": {
                str(t): {"mean": self.mean[t].tolist(), "cov": self.cov[t].tolist()}
                for t in range(self.hours)
            },
        }
        return json.dumps(payload, indent=2)

    @staticmethod
    def from_json(text: str) -> "DemandModel":
        try:
            payload = json.loads(text)
            hours = sorted(payload["hours"], key=int)
            mean = np.array([payload["hours"][h]["mean"] for h in hours], dtype=float)
            cov = np.array([payload["hours"][h]["cov"] for h in hours], dtype=float)
        except (KeyError, ValueError, TypeError) as e:
            raise DataError(f"malformed model JSON: {e}") from e
        return DemandModel(mean=mean, cov=cov)

    def save(self, path: Path) -> None:
        Path(path).write_text(self.to_json())

    @staticmethod
    def load(path: Path) -> "DemandModel":
        return DemandModel.from_json(Path(path).read_text())


def estimate_model(records: UsageRecords) -> DemandModel:
    """Sample mean and unbiased (D-1) sample covariance across days, per slot."""
    D = records.n_days
    if D < 2:
        raise DataError(f"at least 2 days are required to estimate covariances, got {D}")
    u = records.usage
    mean = u.mean(axis=0)
    centered = u - mean[None, :, :]
    cov = np.einsum("dtl,dtm->tlm", centered, centered) / (D - 1)
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    model = DemandModel(mean=mean, cov=cov)
    logger.info("Estimated demand model: %d slots, %d participants from %d days", model.hours, model.participants, D)
    return model


def participant_profile(model: DemandModel) -> pd.DataFrame:
    """Expected negawatt and its standard deviation per (t, participant)."""
    std = np.sqrt(np.clip(np.diagonal(model.cov, axis1=1, axis2=2), 0.0, None))
    t_idx, l_idx = np.meshgrid(np.arange(model.hours), np.arange(model.participants), indexing="ij")
    return pd.DataFrame(
        {
            "t": t_idx.ravel(),
            "participant": l_idx.ravel() + 1,
            "mean": model.mean.ravel(),
            "std": std.ravel(),
        }
    )


@dataclass
class InstanceConfig:
    """One time period T: member times T..T+N_T-1 and their P'_t targets."""

    L: int
    M: int
    period_start: int
    p_proc_prime: np.ndarray
    n_times: int = 3
    delta: float = 0.2

    def __post_init__(self):
        self.p_proc_prime = np.asarray(self.p_proc_prime, dtype=float).reshape(-1)
        if self.n_times < 1:
            raise ValueError("a period needs at least one member time")
        if not 0 < self.M <= self.L:
            raise ValueError(f"requests M_T={self.M} must satisfy 0 < M_T <= L={self.L}")
        if self.p_proc_prime.shape == (1,) and self.n_times > 1:
            self.p_proc_prime = np.repeat(self.p_proc_prime, self.n_times)
        if self.p_proc_prime.shape != (self.n_times,):
            raise ValueError("one P' value per member time is required")

    @property
    def times(self) -> List[int]:
        return [self.period_start + k for k in range(self.n_times)]

    @property
    def p_proc(self) -> np.ndarray:
        """Requested procurement P_t = P'_t - delta/2."""
        return self.p_proc_prime - self.delta / 2.0

    def check_model(self, model: DemandModel) -> None:
        if model.participants != self.L:
            raise DataError(f"model has {model.participants} participants, instance expects {self.L}")
        missing = [t for t in self.times if not 0 <= t < model.hours]
        if missing:
            raise DataError(f"period T={self.period_start} needs times {missing} absent from the model")

    def period_means(self, model: DemandModel) -> np.ndarray:
        """N_T x L matrix of E[p_{t,l}] for the member times."""
        self.check_model(model)
        return model.mean[self.times]

    def period_cov(self, model: DemandModel) -> np.ndarray:
        """sigma_{T,l,l'}: covariance averaged over the member times."""
        self.check_model(model)
        return model.cov[self.times].mean(axis=0)


def _occupation_vector(instance: InstanceConfig, x: int) -> np.ndarray:
    occ = (int(x) >> np.arange(instance.L)) & 1
    if int(occ.sum()) != instance.M or int(x) >> instance.L:
        raise ValueError(f"mask {x:#b} is not a feasible portfolio with {instance.M} requests")
    return occ.astype(float)


def cost_of_bitstring(instance: InstanceConfig, model: DemandModel, x: int) -> float:
    """E_{T,x} = sum sigma_T x x + (1/N_T) sum_t (sum_l mean[t,l] x_l - P'_t)^2."""
    occ = _occupation_vector(instance, x)
    risk = float(occ @ instance.period_cov(model) @ occ)
    totals = instance.period_means(model) @ occ
    penalty = float(np.mean((totals - instance.p_proc_prime) ** 2))
    return risk + penalty


def _check_basis(instance: InstanceConfig, basis: OccupationBasis) -> None:
    if basis.L != instance.L or basis.M != instance.M:
        raise ValueError(
            f"basis (L={basis.L}, M={basis.M}) does not match the instance (L={instance.L}, M={instance.M})"
        )


def risk_diagonal(instance: InstanceConfig, model: DemandModel, basis: OccupationBasis) -> np.ndarray:
    _check_basis(instance, basis)
    occ = basis.occupations.astype(float)
    return np.einsum("il,lm,im->i", occ, instance.period_cov(model), occ)


def penalty_diagonal(instance: InstanceConfig, model: DemandModel, basis: OccupationBasis) -> np.ndarray:
    _check_basis(instance, basis)
    totals = basis.occupations.astype(float) @ instance.period_means(model).T
    return np.mean((totals - instance.p_proc_prime[None, :]) ** 2, axis=1)


def build_cost_diagonal(instance: InstanceConfig, model: DemandModel, basis: OccupationBasis) -> np.ndarray:
    return risk_diagonal(instance, model, basis) + penalty_diagonal(instance, model, basis)


@dataclass
class OracleResult:
    E_min: float
    E_max: float
    mean: float
    argmin: List[int]

    @property
    def W_T(self) -> float:
        return self.E_max - self.E_min

    @property
    def random_delta_e(self) -> float:
        """Expected excess of uniform sampling over the feasible set."""
        return self.mean - self.E_min

    def to_dict(self, basis: OccupationBasis) -> Dict:
        return {
            "E_min": self.E_min,
            "E_max": self.E_max,
            "W_T": self.W_T,
            "mean": self.mean,
            "argmin": [basis.bitstring(m) for m in self.argmin],
            "random_delta_E": self.random_delta_e,
            "random_delta_E_over_W": self.random_delta_e / self.W_T if self.W_T > 0 else None,
        }


def brute_force_solve(
    instance: InstanceConfig,
    model: DemandModel,
    basis: OccupationBasis,
    diag: np.ndarray | None = None,
) -> OracleResult:
    if basis.dim > MAX_ORACLE_DIM:
        raise ValueError(f"brute force limited to {MAX_ORACLE_DIM} feasible states, got {basis.dim}")
    if diag is None:
        diag = build_cost_diagonal(instance, model, basis)
    E_min = float(diag.min())
    E_max = float(diag.max())
    argmin = [int(m) for m in basis.states[diag == E_min]]
    result = OracleResult(E_min=E_min, E_max=E_max, mean=float(diag.mean()), argmin=argmin)
    logger.info(
        "Oracle T=%d: E_min=%.6g E_max=%.6g W_T=%.6g over %d states",
        instance.period_start, E_min, E_max, result.W_T, basis.dim,
    )
    return result


def make_instance(
    L: int,
    M: int,
    period_start: int,
    p_proc_prime: Sequence[float] | float,
    n_times: int = 3,
    delta: float = 0.2,
) -> InstanceConfig:
    return InstanceConfig(
        L=L, M=M, period_start=period_start, p_proc_prime=np.atleast_1d(p_proc_prime),
        n_times=n_times, delta=delta,
    )
