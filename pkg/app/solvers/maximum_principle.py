"""
Maximum-Principle Strategies
----------------------------
Closed-form optimal advertising for the constrained problem with linear
terminal utility:

- quadratic cost u^2/2 on [0, R]: u*(t, xi) = min(b(xi) p(t, xi), R)
- linear cost u on [0, R]:        u* = R where b p > 1, else 0
- quadratic cost under the budget int int u^2 <= M (Lagrange multiplier)

The dual arc solves p' + A p = 0 backward from p(T); for p(T) = 1 it is
p(t) = e^{-rho (T - t)} whatever the diffusion, since constants are
eigenfunctions of the Neumann Laplacian with eigenvalue 0.
"""

from __future__ import annotations

import logging
import math
from typing import Optional, Sequence

import numpy as np

from app.errors import ConfigurationError, InfeasibleError
from app.models.schemas import BudgetSolution, ControlRule, ControlSignal, DomainSpec, DualArc, ModelParams, SpectralField
from app.solvers.dynamics import decay_energy, effectiveness_at, effectiveness_quadrature, time_grid
from app.spectral.basis import a_eigenvalues, constant_field, quadrature_grid, reconstruct

logger = logging.getLogger(__name__)


def conjugate_quadratic_capped(zeta, R: float):
    """Fenchel conjugate of u^2/2 restricted to [0, R]."""
    if R <= 0:
        raise ValueError("cap R must be positive")
    z = np.asarray(zeta, dtype=float)
    out = np.where(z < 0, 0.0, np.where(z <= R, 0.5 * z**2, z * R - 0.5 * R**2))
    return float(out) if out.ndim == 0 else out


def argmax_quadratic_capped(zeta, R: float):
    """Maximizer of zeta u - u^2/2 over [0, R]."""
    if R <= 0:
        raise ValueError("cap R must be positive")
    out = np.clip(np.asarray(zeta, dtype=float), 0.0, R)
    return float(out) if out.ndim == 0 else out


def conjugate_linear_capped(zeta, R: float):
    """Fenchel conjugate of u restricted to [0, R]: R (zeta - 1)^+."""
    z = np.asarray(zeta, dtype=float)
    out = R * np.maximum(z - 1.0, 0.0)
    return float(out) if out.ndim == 0 else out


def argmax_linear_capped(zeta, R: float):
    """Bang-bang selection from the subdifferential; the tie zeta = 1 picks 0."""
    out = np.where(np.asarray(zeta, dtype=float) > 1.0, R, 0.0)
    return float(out) if out.ndim == 0 else out


def dual_arc_field(dual: DualArc, t: float, domain: DomainSpec) -> SpectralField:
    """p(t) = e^{(T - t) A} p(T) in spectral coordinates."""
    if not 0.0 <= t <= dual.horizon_T:
        raise ValueError(f"t = {t} outside [0, {dual.horizon_T}]")
    terminal = constant_field(domain, 1.0) if dual.terminal == "constant_one" else dual.terminal
    mu = a_eigenvalues(terminal.domain, dual.rho, dual.diffusion)
    return terminal.with_coeffs(np.exp(-mu * (dual.horizon_T - t)) * terminal.coeffs)


def dual_arc_eval(dual: DualArc, t: float, xi: Sequence[float], domain: Optional[DomainSpec] = None) -> float:
    if not 0.0 <= t <= dual.horizon_T:
        raise ValueError(f"t = {t} outside [0, {dual.horizon_T}]")
    if dual.terminal == "constant_one":
        return math.exp(-dual.rho * (dual.horizon_T - t))
    field = dual_arc_field(dual, t, domain or dual.terminal.domain)
    return float(reconstruct(field, [tuple(xi)])[0])


def _dual_values(dual: DualArc, t: float, xi1: np.ndarray, xi2: np.ndarray, domain: DomainSpec) -> np.ndarray:
    if dual.terminal == "constant_one":
        return np.full(np.shape(xi1), math.exp(-dual.rho * (dual.horizon_T - t)))
    field = dual_arc_field(dual, t, domain)
    pts = np.stack([np.ravel(xi1), np.ravel(xi2)], axis=1)
    return reconstruct(field, pts).reshape(np.shape(xi1))


def strategy_linear_reward_quadratic_cost(params: ModelParams, steps: Optional[int] = None) -> ControlSignal:
    """u*(t, xi) = b(xi) e^{-rho (T - t)} capped at R."""
    rho, T, R = params.rho, params.horizon_T, params.cap_R

    def rule(t, xi1, xi2):
        zeta = effectiveness_at(params, xi1, xi2) * math.exp(-rho * (T - t))
        return np.clip(zeta, 0.0, R)

    return ControlSignal(
        times=time_grid(T, steps),
        rule=ControlRule(tag="linear_reward_quadratic_cost", parameters={"rho": rho, "T": T, "R": R}, fn=rule),
    )


def strategy_linear_reward_linear_cost(params: ModelParams, dual: Optional[DualArc] = None, steps: Optional[int] = None) -> ControlSignal:
    """Bang-bang: R where b p > 1, 0 where b p <= 1."""
    if not math.isfinite(params.cap_R):
        raise ConfigurationError("linear cost needs a finite cap R")
    dual = dual or DualArc(rho=params.rho, horizon_T=params.horizon_T, diffusion=params.diffusion)
    R, domain = params.cap_R, params.domain

    def rule(t, xi1, xi2):
        zeta = effectiveness_at(params, xi1, xi2) * _dual_values(dual, t, xi1, xi2, domain)
        return argmax_linear_capped(zeta, R)

    return ControlSignal(
        times=time_grid(params.horizon_T, steps),
        rule=ControlRule(tag="linear_reward_linear_cost", parameters={"rho": dual.rho, "T": dual.horizon_T, "R": R}, fn=rule),
    )


def switching_time(b_value: float, rho: float, T: float) -> float:
    """Start of the bang arc R for a cell with constant b and p = e^{-rho (T - t)}; T if b <= 1."""
    if b_value <= 1.0:
        return T
    return max(0.0, T - math.log(b_value) / rho)


def _effectiveness_energy(params: ModelParams) -> float:
    (_, w1), (_, w2) = quadrature_grid(params.domain)
    return float(np.sum(w1[:, None] * w2[None, :] * effectiveness_quadrature(params) ** 2))


def budget_energy(params: ModelParams, lam: float) -> float:
    """int_0^T int u_lam^2 for u_lam = b e^{-rho (T - t)} / (2 lam)."""
    return _effectiveness_energy(params) * decay_energy(params.rho, params.horizon_T) / (4.0 * lam**2)


def solve_budget_constrained(params: ModelParams, M: float, steps: Optional[int] = None) -> BudgetSolution:
    """Maximize int x(T) subject to int int u^2 = M through the Lagrange multiplier."""
    if M <= 0:
        raise ValueError("budget M must be positive")
    if math.isfinite(params.cap_R):
        raise ConfigurationError("the budget problem has no pointwise cap; leave cap_R unset")
    b_energy = _effectiveness_energy(params)
    if b_energy <= 0.0:
        raise InfeasibleError("effectiveness b vanishes everywhere; no control reaches the state")

    g_norm = math.sqrt(b_energy * decay_energy(params.rho, params.horizon_T))
    lam = g_norm / (2.0 * math.sqrt(M))
    rho, T = params.rho, params.horizon_T
    logger.info("budget multiplier lambda = %.6g for M = %.6g", lam, M)

    def rule(t, xi1, xi2):
        return effectiveness_at(params, xi1, xi2) * math.exp(-rho * (T - t)) / (2.0 * lam)

    control = ControlSignal(
        times=time_grid(T, steps),
        rule=ControlRule(tag="budget", parameters={"rho": rho, "T": T, "lambda": lam}, fn=rule),
    )
    return BudgetSolution(control=control, lam=lam, budget_M=M, energy=budget_energy(params, lam))
