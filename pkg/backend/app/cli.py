"""Command-line entry point: synth | estimate | oracle | solve | hf-trace | compare."""
from __future__ import annotations

import argparse
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .ansatz import Variant, build_problem
from .basis import OccupationBasis, enumerate_basis
from .config import RunConfig, load_run_config, settings, sub_rng
from .errors import ConvergenceError, NegawattError
from .hf import HFSolution, calibrate_t_hop, hf_energy, hf_iterate, hop_spectral_range
from .metrics import (
    Histogram,
    PeriodReport,
    histogram_frame,
    negawatt_frame,
    period_report,
    random_histogram,
    report_table,
    table_to_dict,
    write_table_csv,
)
from .optimizer import run_ladder
from .portfolio import (
    DemandModel,
    InstanceConfig,
    OracleResult,
    brute_force_solve,
    build_cost_diagonal,
    estimate_model,
    participant_profile,
)
from .usage import UsageRecords, ingest_usage_csv, synth_usage, write_usage

logger = logging.getLogger("negawatt")

VARIANT_ORDER = list(Variant)


def _write_json(path: Path, payload: Dict) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _write_csv(frame: pd.DataFrame, path: Path, **kwargs) -> None:
    frame.to_csv(path, index=kwargs.pop("index", False), lineterminator="\n", **kwargs)


# ---------- pipeline pieces ----------


def load_records(cfg: RunConfig) -> UsageRecords:
    data = cfg.data
    if data.source == "csv":
        return ingest_usage_csv(data.csv_path, hours_per_day=data.hours_per_day)
    return synth_usage(
        cfg.seed,
        cfg.instance.participants,
        data.days,
        profile=data.profile,
        rng=sub_rng(cfg.seed, "synth"),
        hours_per_day=data.hours_per_day,
    )


def load_model(cfg: RunConfig) -> DemandModel:
    return estimate_model(load_records(cfg))


def build_instances(cfg: RunConfig, periods: Optional[Iterable[int]] = None) -> List[InstanceConfig]:
    inst = cfg.instance
    periods = inst.periods if periods is None else periods
    return [
        InstanceConfig(
            L=inst.participants,
            M=inst.requests,
            period_start=T,
            p_proc_prime=[inst.p_prime_for(T + k) for k in range(inst.period_length)],
            n_times=inst.period_length,
            delta=inst.delta,
        )
        for T in periods
    ]


def make_basis(cfg: RunConfig) -> OccupationBasis:
    return enumerate_basis(cfg.instance.participants, cfg.instance.requests, settings.max_sites)


@dataclass
class PeriodSetup:
    """Precomputation for one period, shared read-only by its variant cells."""

    instance: InstanceConfig
    diag: np.ndarray
    oracle: OracleResult
    t_hop: float
    hop_range: float
    hf: Optional[HFSolution] = None


def prepare_period(
    cfg: RunConfig,
    model: DemandModel,
    basis: OccupationBasis,
    instance: InstanceConfig,
    need_hf: bool,
) -> PeriodSetup:
    instance.check_model(model)
    diag = build_cost_diagonal(instance, model, basis)
    oracle = brute_force_solve(instance, model, basis, diag)
    t_hop = calibrate_t_hop(instance, model, basis)
    hf = None
    if need_hf:
        hf = hf_iterate(
            instance, model, t_hop,
            alpha=cfg.hf.alpha, tol=cfg.hf.tol, max_iter=cfg.hf.max_iter, init=cfg.hf.initial_density,
        )
    return PeriodSetup(
        instance=instance,
        diag=diag,
        oracle=oracle,
        t_hop=t_hop,
        hop_range=t_hop * hop_spectral_range(instance.L, instance.M),
        hf=hf,
    )


def run_cell(
    cfg: RunConfig,
    model: DemandModel,
    basis: OccupationBasis,
    setup: PeriodSetup,
    variant: Variant,
) -> List[PeriodReport]:
    """Level ladder of one (variant, period) cell and a report per requested level."""
    problem = build_problem(variant, setup.instance, model, basis, setup.t_hop, hf=setup.hf, diag=setup.diag)
    T = setup.instance.period_start
    results = run_ladder(
        problem,
        cfg.solver.levels,
        setup.oracle,
        setup.hop_range,
        cfg.solver,
        cfg.seed,
        (VARIANT_ORDER.index(variant), T),
    )
    hf_converged = setup.hf.converged if variant is Variant.FQAOA_SCLFM else None
    return [
        period_report(results[p], problem, setup.instance, model, setup.oracle, cfg.report.bins, hf_converged)
        for p in sorted(results)
    ]


@dataclass
class GridOutcome:
    setups: List[PeriodSetup]
    reports: List[PeriodReport]

    @property
    def hf_failures(self) -> List[int]:
        return [s.instance.period_start for s in self.setups if s.hf is not None and not s.hf.converged]


def run_grid(cfg: RunConfig, model: DemandModel, threads: int) -> GridOutcome:
    """All (variant, period) cells on a thread pool; results come back in grid order."""
    basis = make_basis(cfg)
    variants = list(cfg.solver.variants)
    need_hf = Variant.FQAOA_SCLFM in variants
    setups = [prepare_period(cfg, model, basis, inst, need_hf) for inst in build_instances(cfg)]
    cells: List[Tuple[PeriodSetup, Variant]] = [(s, v) for v in variants for s in setups]
    logger.info(
        "Running %d cells (%d variants x %d periods, levels %s) on %d threads",
        len(cells), len(variants), len(setups), cfg.solver.levels, threads,
    )
    with ThreadPoolExecutor(max_workers=threads) as pool:
        per_cell = list(pool.map(lambda cell: run_cell(cfg, model, basis, cell[0], cell[1]), cells))
    reports = [r for cell_reports in per_cell for r in cell_reports]
    return GridOutcome(setups=setups, reports=reports)


def random_histograms(setups: Sequence[PeriodSetup], bins: int) -> Dict[int, Histogram]:
    return {
        s.instance.period_start: random_histogram(s.diag, s.oracle, bins)
        for s in setups
        if s.oracle.W_T > 0
    }


def write_grid_outputs(cfg: RunConfig, outcome: GridOutcome) -> None:
    out = cfg.out_dir
    for r in outcome.reports:
        r.write_json(out / f"report_{r.variant.value}_T{r.instance.period_start:02d}_p{r.p}.json")
    _write_csv(negawatt_frame(outcome.reports), out / "negawatt.csv")
    _write_csv(histogram_frame(outcome.reports, random_histograms(outcome.setups, cfg.report.bins)), out / "histograms.csv")
    logger.info("Wrote %d reports to %s", len(outcome.reports), out)


def _raise_on_hf_failures(outcome: GridOutcome) -> None:
    failed = outcome.hf_failures
    if failed:
        raise ConvergenceError(
            f"Hartree-Fock did not converge for periods {failed}; reports were written from the last iterate"
        )


# ---------- subcommands ----------


def cmd_synth(cfg: RunConfig, args: argparse.Namespace) -> int:
    records = load_records(cfg)
    fmt = getattr(args, "format", "csv")
    path = cfg.out_dir / ("usage.parquet" if fmt == "parquet" else "usage.csv")
    write_usage(records, path, fmt)
    logger.info("Wrote %s", path)
    return 0


def cmd_estimate(cfg: RunConfig, args: argparse.Namespace) -> int:
    model = load_model(cfg)
    out = cfg.out_dir
    model.save(out / "model.json")
    _write_csv(participant_profile(model), out / "profile.csv")
    names = [f"p{l + 1}" for l in range(model.participants)]
    for inst in build_instances(cfg):
        cov = pd.DataFrame(inst.period_cov(model), index=names, columns=names)
        _write_csv(cov, out / f"period_cov_T{inst.period_start:02d}.csv", index=True, index_label="participant")
    logger.info("Wrote model.json, profile.csv and %d period covariances to %s", len(cfg.instance.periods), out)
    return 0


def cmd_oracle(cfg: RunConfig, args: argparse.Namespace) -> int:
    model = load_model(cfg)
    basis = make_basis(cfg)
    periods = {}
    for inst in build_instances(cfg):
        inst.check_model(model)
        diag = build_cost_diagonal(inst, model, basis)
        oracle = brute_force_solve(inst, model, basis, diag)
        entry = {"times": inst.times, "P_proc_prime": inst.p_proc_prime.tolist(), **oracle.to_dict(basis)}
        entry["random_histogram"] = (
            random_histogram(diag, oracle, cfg.report.bins).to_dict() if oracle.W_T > 0 else None
        )
        periods[str(inst.period_start)] = entry
    payload = {"participants": basis.L, "requests": basis.M, "feasible_states": basis.dim, "periods": periods}
    _write_json(cfg.out_dir / "oracle.json", payload)
    return 0


def cmd_hf_trace(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Per-alpha HF traces; non-convergence is logged, not fatal."""
    model = load_model(cfg)
    basis = make_basis(cfg)
    summary: Dict[str, Dict] = {}
    for inst in build_instances(cfg, cfg.hf.trace_periods):
        inst.check_model(model)
        t_hop = calibrate_t_hop(inst, model, basis)
        alphas = {}
        for alpha in cfg.hf.trace_alphas:
            sol = hf_iterate(
                inst, model, t_hop,
                alpha=alpha, tol=cfg.hf.tol, max_iter=cfg.hf.max_iter, init=cfg.hf.initial_density,
            )
            _write_csv(sol.trace_frame(), cfg.out_dir / f"hf_trace_T{inst.period_start:02d}_alpha{alpha:g}.csv")
            alphas[f"{alpha:g}"] = {
                "converged": sol.converged,
                "iterations": sol.iterations,
                "E_HF": sol.energy,
                "E_HF_initial": sol.trace[0][1],
                "E_HF_slater": hf_energy(inst, model, None, sol.orbitals, t_hop),
                "degenerate_fermi": sol.degenerate_fermi,
                "energy_gap": sol.energy_gap,
            }
        summary[str(inst.period_start)] = {"t_hop": t_hop, "alphas": alphas}
    _write_json(cfg.out_dir / "hf_summary.json", {"periods": summary})
    return 0


def cmd_solve(cfg: RunConfig, args: argparse.Namespace) -> int:
    model = load_model(cfg)
    outcome = run_grid(cfg, model, args.threads)
    write_grid_outputs(cfg, outcome)
    _raise_on_hf_failures(outcome)
    return 0


def cmd_compare(cfg: RunConfig, args: argparse.Namespace) -> int:
    model = load_model(cfg)
    outcome = run_grid(cfg, model, args.threads)
    write_grid_outputs(cfg, outcome)
    table = report_table(outcome.reports, cfg.instance.periods, cfg.solver.variants, cfg.solver.levels)
    write_table_csv(table, cfg.out_dir / "table.csv")
    _write_json(cfg.out_dir / "table.json", table_to_dict(table))
    _raise_on_hf_failures(outcome)
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "estimate": cmd_estimate,
    "oracle": cmd_oracle,
    "solve": cmd_solve,
    "hf-trace": cmd_hf_trace,
    "compare": cmd_compare,
}


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="TOML run file (defaults apply when omitted)")
    common.add_argument("--out", type=Path, default=None, help="Output directory (overrides the run file)")
    common.add_argument("--seed", type=int, default=None, help="Seed (overrides the run file)")
    common.add_argument(
        "--threads",
        type=int,
        default=None,
        help="Worker threads for grid cells (default: NEGAWATT_THREADS or 1)",
    )

    parser = argparse.ArgumentParser(prog="negawatt", description="Demand-response portfolio simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "synth":
            p.add_argument("--format", choices=["csv", "parquet"], default="csv", help="Usage file format")
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, settings.log_level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args.threads = max(1, args.threads if args.threads is not None else settings.threads)
    try:
        cfg = load_run_config(args.config, seed=args.seed, out_dir=args.out)
        return COMMANDS[args.command](cfg, args)
    except NegawattError as e:
        logger.error("%s", e)
        return e.exit_code
    except Exception:
        logger.exception("Unexpected failure in '%s'", args.command)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
