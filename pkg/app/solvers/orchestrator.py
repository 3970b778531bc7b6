"""
Scenario Orchestrator
---------------------
Runs one scenario end to end: build the model, solve the requested
problem, write the exports, and return a RunReport.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from app.errors import GoodwillError, ScenarioError
from app.models.schemas import ControlSignal, DomainSpec, ModelParams, ObjectiveRule, RunReport, ScalarLQInstance, ScenarioConfig, SpectralField, Trajectory
from app.solvers.dynamics import average_goodwill, effectiveness_quadrature, evaluate_objective_general, mild_solve, sample_control, time_grid
from app.solvers.lq_indefinite import evaluate_J_i, riccati_p1_mode, synthesize_p1, wellposedness_margin
from app.solvers.lq_targeting import evaluate_J_h, p2_mode_value, riccati_p2_mode, sweep_p2, synthesize_p2, to_tracking_frame
from app.solvers.maximum_principle import (
    budget_energy,
    solve_budget_constrained,
    strategy_linear_reward_linear_cost,
    strategy_linear_reward_quadratic_cost,
    switching_time,
)
from app.spectral.basis import a_eigenvalues, evaluate_grid, zero_field
from app.tools.exports import control_csv, render_report, table_csv, time_stamp, trajectory_csv, write_atomic, write_grid
from app.tools.scenario_config import build_model_params
from app.verification.fd_solver import fd_solve
from app.verification.gateaux import gateaux_gradient_norm, table_norm
from app.verification.scalar_dp import dp_convergence_table, richardson_value

logger = logging.getLogger(__name__)

FD_TOLERANCE = 1e-3
DP_TOLERANCE = 1e-6
GATEAUX_TOLERANCE = 1e-6
CHECK_MODES = [(0, 0), (1, 0), (0, 1), (1, 1)]


class _Run:
    """Mutable state threaded through one scenario."""

    def __init__(self, cfg: ScenarioConfig, out_dir: Path, seed: int) -> None:
        self.cfg = cfg
        self.out_dir = out_dir
        self.seed = seed
        self.report = RunReport(problem=cfg.problem.kind)

    def write(self, name: str, text: str) -> None:
        self.report.files.append(write_atomic(self.out_dir / name, text))

    def export_state(self, traj: Trajectory, u: ControlSignal) -> None:
        domain = traj.domain
        self.write("trajectory.csv", trajectory_csv(traj))
        self.write("control.csv", control_csv(u, domain.length_L, domain.height_H, self.cfg.problem.control_grid))
        final = evaluate_grid(traj.final, self.cfg.problem.fd_nx, self.cfg.problem.fd_ny)
        path = self.out_dir / f"field_t{time_stamp(float(traj.times[-1]))}.grid"
        self.report.files.append(write_grid(path, final))


def _zero_control(params: ModelParams, steps: int) -> ControlSignal:
    times = time_grid(params.horizon_T, steps)
    return ControlSignal(times=times, domain=params.domain, coeffs=np.zeros((times.size,) + params.domain.shape))


def _simulate(run: _Run, params: ModelParams, target: Optional[SpectralField]) -> None:
    u = _zero_control(params, run.cfg.output.time_steps)
    traj = mild_solve(params, u)
    run.report.values["total_goodwill_T"] = float(average_goodwill(traj)[-1])
    run.export_state(traj, u)


def _capped_cost(params: ModelParams, scale: float, tag: str) -> ObjectiveRule:
    cap = params.cap_R if math.isfinite(params.cap_R) else None
    if tag == "linear":
        return ObjectiveRule(tag="linear", scale=scale)
    return ObjectiveRule(tag="capped_quadratic", scale=scale, cap=cap)


def _mp_quadratic(run: _Run, params: ModelParams, target: Optional[SpectralField]) -> None:
    u = strategy_linear_reward_quadratic_cost(params, run.cfg.output.time_steps)
    traj = mild_solve(params, u)
    run.report.values["objective"] = evaluate_objective_general(params, traj, u, "linear", _capped_cost(params, 0.5, "quadratic"))
    run.report.values["total_goodwill_T"] = float(average_goodwill(traj)[-1])
    run.export_state(traj, u)


def _mp_linear(run: _Run, params: ModelParams, target: Optional[SpectralField]) -> None:
    u = strategy_linear_reward_linear_cost(params, steps=run.cfg.output.time_steps)
    traj = mild_solve(params, u)
    run.report.values["objective"] = evaluate_objective_general(params, traj, u, "linear", _capped_cost(params, 1.0, "linear"))
    run.report.values["total_goodwill_T"] = float(average_goodwill(traj)[-1])
    b_max = float(np.max(effectiveness_quadrature(params)))
    run.report.diagnostics["switching_time_at_max_b"] = switching_time(b_max, params.rho, params.horizon_T)
    run.export_state(traj, u)


def _budget(run: _Run, params: ModelParams, target: Optional[SpectralField]) -> None:
    solution = solve_budget_constrained(params, run.cfg.problem.budget_M, run.cfg.output.time_steps)
    traj = mild_solve(params, solution.control)
    run.report.values["lambda"] = solution.lam
    run.report.values["energy"] = budget_energy(params, solution.lam)
    run.report.values["total_goodwill_T"] = float(average_goodwill(traj)[-1])
    run.export_state(traj, solution.control)


def _p1(run: _Run, params: ModelParams, target: Optional[SpectralField]) -> None:
    solution = synthesize_p1(params, run.cfg.output.time_steps)
    run.report.values["value"] = solution.value
    run.report.values["value_direct"] = evaluate_J_i(params, solution.control)
    run.report.diagnostics["margin"] = solution.margin
    run.report.tables["modes"] = [
        {"m": m, "n": n, "mu_k": sol.mu_k, "C_k": sol.C_k, "p_k(T)": riccati_p1_mode(sol.mu_k, sol.gamma, params.horizon_T)}
        for (m, n), sol in zip(_mode_pairs(params.domain), solution.law.mode_solutions)
    ]
    run.export_state(solution.trajectory, solution.control)


def _p2(run: _Run, params: ModelParams, target: Optional[SpectralField]) -> None:
    solution = synthesize_p2(params, target, run.cfg.output.time_steps)
    run.report.values["value_formula"] = solution.value_formula
    run.report.values["value_direct"] = solution.value_direct
    run.report.values["terminal_miss"] = solution.terminal_miss
    T = params.horizon_T
    adjoint0 = solution.adjoint[0].reshape(-1)
    run.report.tables["modes"] = [
        {"m": m, "n": n, "p_k(T)": float(riccati_p2_mode(sol.mu_k, sol.gamma, T)), "r_k(0)": float(adjoint0[k])}
        for k, ((m, n), sol) in enumerate(zip(_mode_pairs(params.domain), solution.law.mode_solutions))
    ]
    run.export_state(solution.x_trajectory, solution.control)


def _p2_sweep(run: _Run, params: ModelParams, target: Optional[SpectralField]) -> None:
    rows = sweep_p2(params, run.cfg.problem.k0_list, run.cfg.output.time_steps)
    run.report.tables["sweep"] = [{"k0": k0, "value": v, "terminal_miss": miss} for k0, v, miss in rows]
    run.write("sweep.csv", table_csv(["k0", "value", "terminal_miss"], rows))


def _mode_pairs(domain: DomainSpec) -> List[Tuple[int, int]]:
    return [(idx.m, idx.n) for idx in domain.mode_indices()]


def _verify(run: _Run, params: ModelParams, target: Optional[SpectralField]) -> None:
    cfg, report = run.cfg, run.report
    domain, T, gamma = params.domain, params.horizon_T, params.gamma
    problem = cfg.problem

    logger.info("   verify: spectral solution against finite differences")
    u = strategy_linear_reward_quadratic_cost(params, problem.fd_steps)
    spectral = mild_solve(params, u)
    frames = fd_solve(params, u, problem.fd_nx, problem.fd_ny, problem.fd_steps)
    reference = evaluate_grid(spectral.final, problem.fd_nx, problem.fd_ny).values
    fd_error = float(np.linalg.norm(frames.frames[-1].values - reference) / max(np.linalg.norm(reference), 1e-300))
    report.diagnostics["fd_relative_error"] = fd_error

    logger.info("   verify: per-mode dynamic programming")
    target = target if target is not None else zero_field(domain)
    y0, f = to_tracking_frame(params, target)
    mu = a_eigenvalues(domain, params.rho, params.diffusion)
    margin = wellposedness_margin(gamma, params.rho, T)
    rows, convergence, dp_ok = [], [], True
    for m, n in CHECK_MODES:
        if m > domain.modes_M or n > domain.modes_N:
            continue
        mu_k = float(mu[m, n])
        inst = ScalarLQInstance(a=-mu_k, terminal_weight=gamma, f=float(f.coeffs[m, n]), T=T, steps=problem.dp_steps, x0=float(y0.coeffs[m, n]))
        exact, r0 = p2_mode_value(mu_k, gamma, inst.f, inst.x0, T, cfg.output.time_steps)
        dp_value, dp_affine = richardson_value(inst)
        delta = abs(dp_value - exact) / max(1.0, abs(exact))
        row = {"m": m, "n": n, "problem": "p2", "closed_form": exact, "dp": dp_value, "delta": delta, "r0_delta": abs(dp_affine - r0)}
        rows.append(row)
        dp_ok &= delta <= DP_TOLERANCE
        levels = [problem.dp_steps // 4, problem.dp_steps // 2, problem.dp_steps]
        convergence.extend((m, n, steps, value) for steps, value in dp_convergence_table(inst, [s for s in levels if s >= 100]))

        if margin > 0 and abs(gamma - 2.0 * mu_k) > 1e-9:
            x0_k = float(params.x0.coeffs[m, n])
            p1_inst = ScalarLQInstance(a=-mu_k, terminal_weight=-gamma, T=T, steps=problem.dp_steps, x0=x0_k)
            exact = riccati_p1_mode(mu_k, gamma, T) * x0_k**2
            dp_value, _ = richardson_value(p1_inst)
            delta = abs(dp_value - exact) / max(1.0, abs(exact))
            rows.append({"m": m, "n": n, "problem": "p1", "closed_form": exact, "dp": dp_value, "delta": delta})
            dp_ok &= delta <= DP_TOLERANCE
    report.tables["dp"] = rows
    run.write("dp_convergence.csv", table_csv(["m", "n", "steps", "value"], convergence))

    logger.info("   verify: first-order optimality of the tracking control")
    solution = synthesize_p2(params, target, cfg.output.time_steps)
    u_star = sample_control(solution.control, params)
    slope = gateaux_gradient_norm(lambda v: evaluate_J_h(params, target, v), u_star, problem.directions, run.seed)
    report.diagnostics["gateaux_norm"] = slope
    report.diagnostics["gateaux_scale"] = 1.0 + table_norm(u_star)

    report.diagnostics["fd_ok"] = fd_error <= FD_TOLERANCE
    report.diagnostics["dp_ok"] = dp_ok
    report.diagnostics["gateaux_ok"] = slope <= GATEAUX_TOLERANCE * (1.0 + table_norm(u_star))
    report.ok = bool(report.diagnostics["fd_ok"] and dp_ok and report.diagnostics["gateaux_ok"])


DISPATCH: Dict[str, Callable[[_Run, ModelParams, Optional[SpectralField]], None]] = {
    "simulate": _simulate,
    "mp_quadratic": _mp_quadratic,
    "mp_linear": _mp_linear,
    "budget": _budget,
    "p1": _p1,
    "p2": _p2,
    "p2_sweep": _p2_sweep,
    "verify": _verify,
}


def run(cfg: ScenarioConfig, seed: Optional[int] = None, out_dir: Optional[Path] = None) -> RunReport:
    """Execute the scenario's problem, write every export, and return the report."""
    kind = cfg.problem.kind
    out = Path(out_dir) if out_dir is not None else Path(cfg.output.output_dir)
    state = _Run(cfg, out, cfg.problem.seed if seed is None else seed)

    logger.info("Scenario '%s' -> %s", kind, out)
    try:
        logger.info("Step 1: building model")
        _, params, target = build_model_params(cfg)
        logger.info("Step 2: solving %s", kind)
        DISPATCH[kind](state, params, target)
    except ScenarioError:
        raise
    except GoodwillError as exc:
        raise ScenarioError(kind, exc) from exc

    logger.info("Step 3: writing report")
    report = state.report
    report_path = out / "report.txt"
    report.files.append(report_path)
    write_atomic(report_path, render_report(report))
    logger.info("Scenario '%s' finished (%s), %d files", kind, "ok" if report.ok else "checks failed", len(report.files))
    return report
