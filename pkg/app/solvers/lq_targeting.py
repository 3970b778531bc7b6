"""
Targeting Problem
-----------------
Minimize  J_h(u) = gamma |x(T) - h|^2 + int_0^T |u(t)|^2 dt  with b = 1.

In the distance variable y = h - x the state obeys y' = A y - u + f with
f = -A h, so spectrally f_k = mu_k h_k. The optimal feedback is
u = P(T - t) y + r(t), where P solves the positive Riccati family
(p(0) = gamma) and r solves the backward adjoint

    r' = (mu_k + p_k(T - t)) r - p_k(T - t) f_k,   r(T) = 0.

With eta(s) = r(T - s) the integrating factor e^{mu s} z(s) gives the
exact solution eta(s) = -2 C_k f_k e^{-mu s} (1 - e^{-mu s}) / z(s).
"""

from __future__ import annotations

import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from app.models.schemas import (
    AdjointModeSolution,
    ControlSignal,
    DomainSpec,
    FeedbackLaw,
    GridField,
    ModelParams,
    P2Solution,
    SpectralField,
    TargetSpec,
    Trajectory,
)
from app.solvers.dynamics import control_norm_squared, mild_solve, time_grid
from app.solvers.lq_indefinite import build_law, integration_constant, law_table, log_growth, require_unit_effectiveness
from app.spectral.basis import a_eigenvalues, constant_field, project_grid

logger = logging.getLogger(__name__)

_STEP_NODES = 8
_TAIL_WARNING = 0.01


def to_tracking_frame(params: ModelParams, target: SpectralField) -> Tuple[SpectralField, SpectralField]:
    """y0 = h - x0 and f = -A h, coefficientwise f_k = mu_k h_k."""
    mu = a_eigenvalues(target.domain, params.rho, params.diffusion)
    y0 = target.with_coeffs(target.coeffs - params.x0.coeffs)
    return y0, target.with_coeffs(mu * target.coeffs)


def tracking_spec(params: ModelParams, target: SpectralField) -> TargetSpec:
    _, f = to_tracking_frame(params, target)
    return TargetSpec(target_k=target, f=f)


def riccati_p2_mode(mu_k: float, gamma: float, t):
    """p(t) for p(0) = gamma; stays in (0, gamma] for every t >= 0."""
    C = integration_constant(mu_k, gamma)
    t = np.asarray(t, dtype=float)
    z = 1.0 / (2.0 * mu_k) + C * np.exp(-2.0 * mu_k * t)
    out = np.where(t == 0.0, gamma, -2.0 * mu_k * C * np.exp(-2.0 * mu_k * t) / z)
    return float(out) if out.ndim == 0 else out


def _adjoint_values(mu, C, f, t, T) -> np.ndarray:
    """r(t) = eta(T - t); broadcasts over trailing mode axes."""
    s = np.asarray(T - t, dtype=float)
    decay = np.exp(-mu * s)
    z = 1.0 / (2.0 * mu) + C * decay**2
    return -2.0 * C * f * decay * (1.0 - decay) / z


def adjoint_r_mode(mu_k: float, gamma: float, f_k: float, T: float, grid: Optional[np.ndarray] = None) -> AdjointModeSolution:
    grid = time_grid(T) if grid is None else np.asarray(grid, dtype=float)
    C = integration_constant(mu_k, gamma)
    r = _adjoint_values(mu_k, C, f_k, grid, T)
    r[grid == T] = 0.0
    return AdjointModeSolution(mu_k=mu_k, gamma=gamma, f_k=f_k, times=grid, r=r)


def _law_arrays(law: FeedbackLaw) -> Tuple[np.ndarray, np.ndarray]:
    return np.array([s.mu_k for s in law.mode_solutions]), np.array([s.C_k for s in law.mode_solutions])


def _closed_loop(law: FeedbackLaw, times: np.ndarray, y0: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Exact propagator per step plus Gauss quadrature of the forcing f - r."""
    T = law.horizon_T
    mu, C = _law_arrays(law)
    nodes, weights = leggauss(_STEP_NODES)
    left, right = times[:-1], times[1:]
    half = 0.5 * (right - left)
    tau = (0.5 * (right + left))[:, None] + half[:, None] * nodes[None, :]

    z_right = log_growth(law, T - right)
    z_left = log_growth(law, T - left)
    z_tau = log_growth(law, T - tau)
    carry = np.exp(-np.outer(right - left, mu)) * z_right / z_left
    kernel = np.exp(-(right[:, None, None] - tau[..., None]) * mu) * z_right[:, None, :] / z_tau
    drive = f - _adjoint_values(mu, C, f, tau[..., None], T)
    increments = half[:, None] * np.einsum("q,jqk->jk", weights, kernel * drive)

    states = np.empty((times.size, mu.size))
    states[0] = y0
    for j in range(left.size):
        states[j + 1] = carry[j] * states[j] + increments[j]
    return states


def _running_adjoint_term(mu, C, f, T: float, times: np.ndarray) -> float:
    """int_0^T sum_k (2 r_k f_k - r_k^2) dt by composite Gauss on the time grid."""
    nodes, weights = leggauss(_STEP_NODES)
    left, right = times[:-1], times[1:]
    half = 0.5 * (right - left)
    tau = (0.5 * (right + left))[:, None] + half[:, None] * nodes[None, :]
    r = _adjoint_values(mu, C, f, tau[..., None], T)
    integrand = np.sum(2.0 * r * f - r**2, axis=-1)
    return float(np.sum(half * (integrand @ weights)))


def evaluate_J_h(params: ModelParams, target: SpectralField, u: ControlSignal) -> float:
    """gamma |x(T) - h|^2 + int |u|^2."""
    traj = mild_solve(params, u)
    miss = traj.final.coeffs - target.coeffs
    return params.gamma * float(np.sum(miss**2)) + control_norm_squared(u, params)


def synthesize_p2(params: ModelParams, target: SpectralField, steps: Optional[int] = None) -> P2Solution:
    """Optimal feedback, trajectories in both frames, and the value computed two ways."""
    require_unit_effectiveness(params)
    domain, T, gamma = params.domain, params.horizon_T, params.gamma
    y0, f_field = to_tracking_frame(params, target)
    y0, f = y0.flat, f_field.flat

    law = build_law(domain, params.rho, params.diffusion, gamma, T, "p2_positive")
    mu, C = _law_arrays(law)
    times = time_grid(T, steps)

    y = _closed_loop(law, times, y0, f)
    r = _adjoint_values(mu, C, f, times[:, None], T)
    r[-1] = 0.0
    controls = law_table(law, T - times) * y + r

    value_formula = float(np.sum(law_table(law, T) * y0**2) + 2.0 * np.sum(r[0] * y0)) + _running_adjoint_term(mu, C, f, T, times)

    shape = (times.size,) + domain.shape
    control = ControlSignal(times=times, domain=domain, coeffs=controls.reshape(shape))
    value_direct = evaluate_J_h(params, target, control)
    x = target.flat[None, :] - y
    terminal_miss = float(np.linalg.norm(y[-1]))

    rel = abs(value_formula - value_direct) / max(1.0, abs(value_formula))
    logger.info("P2 synthesized: value %.10g (direct %.10g, rel. gap %.2e), terminal miss %.6g", value_formula, value_direct, rel, terminal_miss)

    return P2Solution(
        law=law,
        control=control,
        y_trajectory=Trajectory(times=times, domain=domain, coeffs=y.reshape(shape)),
        x_trajectory=Trajectory(times=times, domain=domain, coeffs=x.reshape(shape)),
        adjoint=r.reshape(shape),
        value_formula=value_formula,
        value_direct=value_direct,
        terminal_miss=terminal_miss,
    )


def ingest_target(domain: DomainSpec, grid: Union[GridField, SpectralField]) -> SpectralField:
    """Project a grid target on the retained modes, warning when the truncated tail is large."""
    if isinstance(grid, SpectralField):
        return grid
    field = project_grid(domain, grid)
    cell = (grid.length_L / grid.nx) * (grid.height_H / grid.ny)
    total = float(np.sum(grid.values**2)) * cell
    tail = total - float(np.sum(field.coeffs**2))
    if total > 0 and tail > _TAIL_WARNING * total:
        logger.warning("target keeps only %.1f%% of its energy on the retained modes", 100.0 * (1.0 - tail / total))
    return field


def sweep_p2(params: ModelParams, levels: Sequence[float], steps: Optional[int] = None) -> List[Tuple[float, float, float]]:
    """(k0, value, terminal_miss) for uniform targets h = k0."""
    rows = []
    for k0 in levels:
        solution = synthesize_p2(params, constant_field(params.domain, float(k0)), steps)
        rows.append((float(k0), solution.value_formula, solution.terminal_miss))
        logger.info("sweep k0 = %.6g: value %.6g", k0, solution.value_formula)
    return rows


def p2_mode_value(mu_k: float, gamma: float, f_k: float, y0_k: float, T: float, steps: Optional[int] = None) -> Tuple[float, float]:
    """Optimal value and r(0) of a single tracking mode."""
    C = integration_constant(mu_k, gamma)
    r0 = float(_adjoint_values(mu_k, C, f_k, 0.0, T))
    times = time_grid(T, steps)
    mu, Ca, fa = np.array([mu_k]), np.array([C]), np.array([f_k])
    value = riccati_p2_mode(mu_k, gamma, T) * y0_k**2 + 2.0 * r0 * y0_k + _running_adjoint_term(mu, Ca, fa, T, times)
    return float(value), r0
