from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy.optimize import OptimizeResult

from .ansatz import AnsatzParams, AnsatzProblem, Variant
from .config import SolverSettings, sub_rng
from .portfolio import OracleResult

logger = logging.getLogger("negawatt.optimizer")

ARMIJO_C1 = 1e-4
MIN_STEP = 1e-12
CURVATURE_TOL = 1e-12

STATUS_CONVERGED = 0
STATUS_BUDGET = 1
STATUS_LINE_SEARCH = 2

_MESSAGES = {
    STATUS_CONVERGED: "gradient tolerance reached",
    STATUS_BUDGET: "evaluation budget exhausted",
    STATUS_LINE_SEARCH: "line search could not decrease the objective",
}


def central_gradient(fun: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """(f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate i."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.shape[0]):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (fun(x + step) - fun(x - step)) / (2.0 * h)
    return grad


def minimize_bfgs(
    fun: Callable[[np.ndarray], float],
    x0: np.ndarray,
    grad_tol: float = 1e-6,
    max_evals: int = 20000,
    fd_step: float = 1e-6,
) -> OptimizeResult:
    """Quasi-Newton BFGS with finite-difference gradients and Armijo backtracking.

    Only Armijo-accepted steps move the iterate, so `x` is always the best point
    visited along the trajectory. The evaluation budget counts every call of
    `fun`, gradient evaluations included.
    """
    nfev = 0

    def f(x: np.ndarray) -> float:
        nonlocal nfev
        nfev += 1
        return float(fun(x))

    x = np.asarray(x0, dtype=float).copy()
    n = x.shape[0]
    fx = f(x)
    if n == 0:
        return OptimizeResult(x=x, fun=fx, jac=np.zeros(0), nfev=nfev, nit=0,
                              status=STATUS_CONVERGED, success=True, message=_MESSAGES[STATUS_CONVERGED])

    if nfev + 2 * n > max_evals:
        return OptimizeResult(x=x, fun=fx, jac=None, nfev=nfev, nit=0,
                              status=STATUS_BUDGET, success=False, message=_MESSAGES[STATUS_BUDGET])
    g = central_gradient(f, x, fd_step)
    H = np.eye(n)
    fresh_hessian = True
    nit = 0
    status = STATUS_CONVERGED

    while True:
        if np.max(np.abs(g)) <= grad_tol:
            status = STATUS_CONVERGED
            break
        if nfev + 1 + 2 * n > max_evals:
            status = STATUS_BUDGET
            break

        d = -H @ g
        slope = float(g @ d)
        if slope >= 0.0:
            H = np.eye(n)
            fresh_hessian = True
            d = -g
            slope = float(g @ d)

        step = 1.0
        accepted = False
        while nfev + 2 * n < max_evals:
            x_new = x + step * d
            f_new = f(x_new)
            if np.isfinite(f_new) and f_new <= fx + ARMIJO_C1 * step * slope:
                accepted = True
                break
            step *= 0.5
            if step < MIN_STEP:
                break

        if not accepted:
            if nfev + 2 * n >= max_evals:
                status = STATUS_BUDGET
                break
            if fresh_hessian:
                status = STATUS_LINE_SEARCH
                break
            H = np.eye(n)
            fresh_hessian = True
            continue

        g_new = central_gradient(f, x_new, fd_step)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > CURVATURE_TOL * np.linalg.norm(s) * np.linalg.norm(y):
            if fresh_hessian:
                H = (sy / float(y @ y)) * np.eye(n)
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
            fresh_hessian = False
        x, fx, g = x_new, f_new, g_new
        nit += 1
        logger.debug("BFGS iter %d: f=%.12g |g|max=%.3e nfev=%d", nit, fx, np.max(np.abs(g)), nfev)

    return OptimizeResult(x=x, fun=fx, jac=g, nfev=nfev, nit=nit,
                          status=status, success=status == STATUS_CONVERGED, message=_MESSAGES[status])


def init_schedule(p: int, d_gamma: float, d_beta: float) -> AnsatzParams:
    """Linear ramp gamma_j = d_gamma j/p, beta_j = d_beta (1 - (j - 1/2)/p), j = 1..p."""
    if p < 0:
        raise ValueError(f"level must be non-negative, got p={p}")
    if p == 0:
        return AnsatzParams.zeros(0)
    j = np.arange(1, p + 1, dtype=float)
    return AnsatzParams(gamma=d_gamma * j / p, beta=d_beta * (1.0 - (j - 0.5) / p))


def schedule_scales(W_T: float, hop_range: float, solver: SolverSettings) -> Tuple[float, float]:
    """(d_gamma, d_beta) so that gamma W_T and beta times the hopping range are order one."""
    d_gamma = solver.gamma_scale / W_T if W_T > 0 else solver.gamma_scale
    if hop_range > 0:
        d_beta = solver.beta_scale / hop_range
    else:
        d_beta = solver.beta_scale / W_T if W_T > 0 else solver.beta_scale
    return d_gamma, d_beta


@dataclass
class OptimResult:
    variant: Variant
    p: int
    params: AnsatzParams
    E_star: float
    E_min: float
    W_T: float
    restart: int
    n_evals: int
    status: str
    start: str
    restart_energies: List[float] = field(default_factory=list)

    @property
    def delta_e(self) -> float:
        return self.E_star - self.E_min

    @property
    def delta_e_over_w(self) -> Optional[float]:
        return self.delta_e / self.W_T if self.W_T > 0 else None


def _starts(
    p: int,
    d_gamma: float,
    d_beta: float,
    restarts: int,
    perturbation: float,
    rng: np.random.Generator,
    warm: Optional[OptimResult],
) -> List[Tuple[str, np.ndarray]]:
    ramp = init_schedule(p, d_gamma, d_beta).to_vector()
    scales = np.concatenate([np.full(p, abs(d_gamma)), np.full(p, abs(d_beta))])
    starts: List[Tuple[str, np.ndarray]] = [("ramp", ramp)]
    for _ in range(restarts - 1):
        starts.append(("perturbed", ramp + perturbation * scales * rng.standard_normal(2 * p)))
    if warm is not None and warm.p == p - 1:
        # the appended layer is exactly the identity, so this start reproduces E*(p-1)
        padded = AnsatzParams(
            gamma=np.append(warm.params.gamma, 0.0),
            beta=np.append(warm.params.beta, 0.0),
        )
        starts.append(("warm", padded.to_vector()))
    return starts


def optimize_level(
    problem: AnsatzProblem,
    p: int,
    oracle: OracleResult,
    hop_range: float,
    solver: SolverSettings,
    rng: np.random.Generator,
    warm: Optional[OptimResult] = None,
    restarts: Optional[int] = None,
) -> OptimResult:
    """Best of BFGS runs from the ramp, seeded perturbations of it, and the
    zero-padded optimum of level p-1 when given."""
    if p < 0:
        raise ValueError(f"level must be non-negative, got p={p}")
    if p == 0:
        params = AnsatzParams.zeros(0)
        energy = problem.objective(params)
        return OptimResult(
            variant=problem.variant, p=0, params=params, E_star=energy, E_min=oracle.E_min, W_T=oracle.W_T,
            restart=0, n_evals=1, status="evaluated", start="initial", restart_energies=[energy],
        )

    restarts = solver.restarts if restarts is None else restarts
    d_gamma, d_beta = schedule_scales(oracle.W_T, hop_range, solver)
    starts = _starts(p, d_gamma, d_beta, restarts, solver.perturbation, rng, warm)

    best: Optional[Tuple[int, str, OptimizeResult]] = None
    energies: List[float] = []
    n_evals = 0
    for k, (label, x0) in enumerate(starts):
        res = minimize_bfgs(problem.energy, x0, solver.grad_tol, solver.max_evals, solver.fd_step)
        n_evals += res.nfev
        energies.append(float(res.fun))
        if res.status == STATUS_BUDGET:
            logger.warning("%s p=%d start %d (%s): %s", problem.variant.label, p, k, label, res.message)
        if best is None or res.fun < best[2].fun:
            best = (k, label, res)

    k, label, res = best
    status = {STATUS_CONVERGED: "converged", STATUS_BUDGET: "budget", STATUS_LINE_SEARCH: "line-search"}[res.status]
    return OptimResult(
        variant=problem.variant,
        p=p,
        params=AnsatzParams.from_vector(res.x),
        E_star=float(res.fun),
        E_min=oracle.E_min,
        W_T=oracle.W_T,
        restart=k,
        n_evals=n_evals,
        status=status,
        start=label,
        restart_energies=energies,
    )


def run_ladder(
    problem: AnsatzProblem,
    levels: Iterable[int],
    oracle: OracleResult,
    hop_range: float,
    solver: SolverSettings,
    seed: int,
    cell_key: Tuple[int, int],
) -> Dict[int, OptimResult]:
    """Optimize levels 0..max(levels) in order, each warm-started from the previous.

    Levels that were not requested only serve as warm starts and use
    `solver.ladder_restarts` starts. Each level draws its perturbations from
    the stream ("restarts", *cell_key, p).
    """
    wanted = sorted(set(levels))
    results: Dict[int, OptimResult] = {}
    previous: Optional[OptimResult] = None
    for p in range(0, max(wanted) + 1):
        restarts = solver.restarts if p in wanted else solver.ladder_restarts
        rng = sub_rng(seed, "restarts", *cell_key, p)
        result = optimize_level(problem, p, oracle, hop_range, solver, rng, warm=previous, restarts=restarts)
        if p in wanted:
            ratio = result.delta_e_over_w
            logger.info(
                "%s T=%d p=%d: E*=%.8g dE/W=%s (%s, start=%s, %d evals)",
                problem.variant.label, cell_key[1], p, result.E_star,
                "n/a" if ratio is None else f"{ratio:.4f}", result.status, result.start, result.n_evals,
            )
            results[p] = result
        previous = result
    return results
