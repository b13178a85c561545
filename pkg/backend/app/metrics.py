"""Evaluation quantities of a final state and the report formats built from them."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .ansatz import AnsatzProblem, Variant
from .basis import StateVector, probabilities
from .optimizer import OptimResult
from .portfolio import DemandModel, InstanceConfig, OracleResult

logger = logging.getLogger("negawatt.metrics")

Distribution = Union[StateVector, np.ndarray]


def _probs(state: Distribution) -> np.ndarray:
    if isinstance(state, StateVector):
        return probabilities(state)
    return np.asarray(state, dtype=float)


def _occupations(state: StateVector) -> np.ndarray:
    return state.basis.occupations.astype(float)


def total_negawatt(state: StateVector, model: DemandModel, t: int) -> float:
    """P_tot = sum_x P_x sum_l mean[t, l] x_l."""
    totals = _occupations(state) @ model.mean[t]
    return float(probabilities(state) @ totals)


def negawatt_std(state: StateVector, model: DemandModel, t: int) -> float:
    """sqrt(E[(sum_l p_tl x_l)^2] - P_tot^2), negative residue clamped at 0."""
    occ = _occupations(state)
    probs = probabilities(state)
    totals = occ @ model.mean[t]
    second = np.einsum("il,lm,im->i", occ, model.cov[t], occ) + totals**2
    variance = float(probs @ second) - float(probs @ totals) ** 2
    return float(np.sqrt(max(variance, 0.0)))


def expected_excess(state: Distribution, diag: np.ndarray, E_min: float) -> float:
    """Delta E_T = sum_x P_x (E_x - E_min)."""
    return max(float(_probs(state) @ (np.asarray(diag, dtype=float) - E_min)), 0.0)


@dataclass
class Histogram:
    edges: np.ndarray
    masses: np.ndarray

    def to_dict(self) -> Dict[str, List[float]]:
        return {"edges": self.edges.tolist(), "masses": self.masses.tolist()}


def cost_histogram(state: Distribution, diag: np.ndarray, E_min: float, W_T: float, bins: int = 10) -> Histogram:
    """Probability mass of the costs over `bins` bins of width W_T/bins anchored at E_min.

    Bins are left-closed and the last bin also holds its upper edge.
    """
    if not W_T > 0:
        raise ValueError(f"cost histogram needs a positive cost range, got W_T={W_T}")
    edges = E_min + W_T * np.arange(bins + 1) / bins
    # rounding can put E_max a hair outside the last edge
    costs = np.clip(np.asarray(diag, dtype=float), edges[0], edges[-1])
    masses, _ = np.histogram(costs, bins=edges, weights=_probs(state))
    return Histogram(edges=edges, masses=masses)


def random_histogram(diag: np.ndarray, oracle: OracleResult, bins: int = 10) -> Histogram:
    """Cost histogram of uniform sampling over the feasible portfolios."""
    uniform = np.full(len(diag), 1.0 / len(diag))
    return cost_histogram(uniform, diag, oracle.E_min, oracle.W_T, bins)


@dataclass
class PeriodLine:
    t: int
    P_tot: float
    sigma_tot: float
    P_proc: float
    P_proc_prime: float
    balance_ok: bool


@dataclass
class PeriodReport:
    instance: InstanceConfig
    variant: Variant
    p: int
    result: OptimResult
    delta_e: float
    per_t: List[PeriodLine]
    histogram: Optional[Histogram]
    t_hop: float
    restart_quartiles: Optional[Dict[str, float]] = None
    hf_converged: Optional[bool] = None

    @property
    def delta_e_over_w(self) -> Optional[float]:
        return self.delta_e / self.result.W_T if self.result.W_T > 0 else None

    def to_dict(self) -> Dict:
        inst = self.instance
        return {
            "instance": {
                "T": inst.period_start,
                "times": inst.times,
                "L": inst.L,
                "M": inst.M,
                "P_proc_prime": inst.p_proc_prime.tolist(),
                "delta": inst.delta,
                "t_hop": self.t_hop,
                "E_min": self.result.E_min,
                "W_T": self.result.W_T,
            },
            "variant": self.variant.value,
            "p": self.p,
            "params": self.result.params.to_dict(),
            "E_star": self.result.E_star,
            "delta_E": self.delta_e,
            "delta_E_over_W": self.delta_e_over_w,
            "per_t": [
                {"t": line.t, "P_tot": line.P_tot, "sigma_tot": line.sigma_tot, "balance_ok": line.balance_ok}
                for line in self.per_t
            ],
            "histogram": self.histogram.to_dict() if self.histogram is not None else None,
            "optimizer": {
                "status": self.result.status,
                "start": self.result.start,
                "restart": self.result.restart,
                "n_evals": self.result.n_evals,
                "restart_quartiles_delta_E_over_W": self.restart_quartiles,
            },
            "hf_converged": self.hf_converged,
        }

    def write_json(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def restart_quartiles(result: OptimResult) -> Optional[Dict[str, float]]:
    """First quartile, median and third quartile of Delta E/W over the restarts."""
    if not result.W_T > 0 or not result.restart_energies:
        return None
    ratios = (np.asarray(result.restart_energies) - result.E_min) / result.W_T
    q1, q2, q3 = np.percentile(ratios, [25, 50, 75])
    return {"q1": float(q1), "median": float(q2), "q3": float(q3), "n": len(ratios)}


def period_report(
    result: OptimResult,
    problem: AnsatzProblem,
    instance: InstanceConfig,
    model: DemandModel,
    oracle: OracleResult,
    bins: int = 10,
    hf_converged: Optional[bool] = None,
) -> PeriodReport:
    state = problem.evolve(result.params)
    lines = []
    for t, p_prime, p_proc in zip(instance.times, instance.p_proc_prime, instance.p_proc):
        p_tot = total_negawatt(state, model, t)
        lines.append(
            PeriodLine(
                t=t,
                P_tot=p_tot,
                sigma_tot=negawatt_std(state, model, t),
                P_proc=float(p_proc),
                P_proc_prime=float(p_prime),
                balance_ok=bool(p_proc <= p_tot <= p_proc + instance.delta),
            )
        )
    histogram = cost_histogram(state, problem.diag, oracle.E_min, oracle.W_T, bins) if oracle.W_T > 0 else None
    return PeriodReport(
        instance=instance,
        variant=problem.variant,
        p=result.p,
        result=result,
        delta_e=expected_excess(state, problem.diag, oracle.E_min),
        per_t=lines,
        histogram=histogram,
        t_hop=problem.t_hop,
        restart_quartiles=restart_quartiles(result),
        hf_converged=hf_converged,
    )


def report_table(
    reports: Iterable[PeriodReport],
    periods: Sequence[int],
    variants: Sequence[Variant],
    levels: Sequence[int],
) -> pd.DataFrame:
    """Delta E_T/W_T with rows (variant, p) and one column per period; NaN marks a gap."""
    records = [
        {
            "variant": r.variant.value,
            "p": r.p,
            "T": r.instance.period_start,
            "value": np.nan if r.delta_e_over_w is None else r.delta_e_over_w,
        }
        for r in reports
    ]
    rows = pd.MultiIndex.from_product([[Variant(v).value for v in variants], list(levels)], names=["variant", "p"])
    if not records:
        return pd.DataFrame(np.nan, index=rows, columns=pd.Index(list(periods), name="T"))
    frame = pd.DataFrame(records, columns=["variant", "p", "T", "value"]).astype({"value": float})
    table = frame.set_index(["variant", "p", "T"])["value"].unstack("T")
    return table.reindex(index=rows, columns=list(periods)).astype(float)


def table_gaps(table: pd.DataFrame) -> List[Dict]:
    gaps = []
    for (variant, p), row in table.iterrows():
        for T, value in row.items():
            if pd.isna(value):
                gaps.append({"variant": variant, "p": int(p), "T": int(T)})
    return gaps


def write_table_csv(table: pd.DataFrame, path: Path) -> None:
    out = table.round(3)
    out.columns = [f"T{T}" for T in out.columns]
    out.to_csv(path, na_rep="", float_format="%.3f", lineterminator="\n")
    gaps = table_gaps(table)
    if gaps:
        logger.warning("Table has %d missing cells, left blank", len(gaps))


def table_to_dict(table: pd.DataFrame) -> Dict:
    rows = []
    for (variant, p), row in table.iterrows():
        rows.append(
            {
                "variant": variant,
                "p": int(p),
                "delta_E_over_W": {str(T): (None if pd.isna(v) else float(v)) for T, v in row.items()},
            }
        )
    return {"periods": [int(T) for T in table.columns], "rows": rows, "gaps": table_gaps(table)}


def negawatt_frame(reports: Iterable[PeriodReport]) -> pd.DataFrame:
    """Total negawatt and its standard deviation per member time, for every report."""
    rows = [
        {
            "variant": r.variant.value,
            "T": r.instance.period_start,
            "p": r.p,
            "t": line.t,
            "P_tot": line.P_tot,
            "sigma_tot": line.sigma_tot,
            "P_proc": line.P_proc,
            "P_proc_prime": line.P_proc_prime,
            "balance_ok": line.balance_ok,
        }
        for r in reports
        for line in r.per_t
    ]
    return pd.DataFrame(
        rows, columns=["variant", "T", "p", "t", "P_tot", "sigma_tot", "P_proc", "P_proc_prime", "balance_ok"]
    )


def histogram_frame(reports: Iterable[PeriodReport], random: Dict[int, Histogram]) -> pd.DataFrame:
    """D_T(E) per (variant, T, p) plus the uniform-sampling row per period (variant 'random')."""
    rows = []

    def _emit(variant: str, T: int, p: Optional[int], hist: Histogram) -> None:
        for k, mass in enumerate(hist.masses):
            rows.append(
                {
                    "variant": variant,
                    "T": T,
                    "p": p,
                    "bin": k,
                    "lower": float(hist.edges[k]),
                    "upper": float(hist.edges[k + 1]),
                    "mass": float(mass),
                }
            )

    for T in sorted(random):
        _emit("random", T, None, random[T])
    for r in reports:
        if r.histogram is not None:
            _emit(r.variant.value, r.instance.period_start, r.p, r.histogram)
    frame = pd.DataFrame(rows, columns=["variant", "T", "p", "bin", "lower", "upper", "mass"])
    frame["p"] = frame["p"].astype("Int64")
    return frame
