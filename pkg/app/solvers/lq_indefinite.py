"""
Indefinite Linear-Quadratic Problem
-----------------------------------
Minimize  J_i(u) = -gamma |x(T)|^2 + int_0^T |u(t)|^2 dt  subject to the
goodwill dynamics with b = 1. The operator Riccati equation diagonalizes on
the Neumann eigenbasis; each mode k solves

    p' = -2 mu_k p - p^2,   p(0) = p0

whose solution is p(t) = -2 mu_k + 1/z(t) with z(t) = 1/(2 mu_k) + C_k e^{-2 mu_k t}
and C_k = 1/(2 mu_k + p0) - 1/(2 mu_k). The terminal reward gives p0 = -gamma;
the tracking problem reuses the same family with p0 = +gamma.

Feedback u = -P(T - t) x, so per mode x_k(t) = x_k(0) e^{-mu_k t} z_k(T - t) / z_k(T).
"""

from __future__ import annotations

import logging
import math
from typing import Literal, Optional, Tuple

import numpy as np

from app.errors import BlowUpError, ConfigurationError, DegenerateConstantError, IllPosedError
from app.models.schemas import (
    ControlSignal,
    DomainSpec,
    FeedbackLaw,
    ModelParams,
    P1Solution,
    RiccatiModeSolution,
    SpectralField,
    Trajectory,
)
from app.solvers.dynamics import control_norm_squared, decay_energy, galerkin_b_matrix, mild_solve, time_grid
from app.spectral.basis import a_eigenvalues

logger = logging.getLogger(__name__)

Sign = Literal["p1_negative", "p2_positive"]

_DEGENERATE_TOL = 1e-12
_UNIT_B_TOL = 1e-8


def wellposedness_margin(gamma: float, rho: float, T: float) -> float:
    """epsilon = 1 - gamma C_{rho,T}; the problem is accepted iff epsilon > 0."""
    return 1.0 - gamma * decay_energy(rho, T)


def coercivity_threshold(rho: float, T: float) -> float:
    return 1.0 / decay_energy(rho, T)


def integration_constant(mu_k: float, p0: float) -> float:
    return 1.0 / (2.0 * mu_k + p0) - 1.0 / (2.0 * mu_k)


def riccati_escape_time(mu_k: float, gamma: float) -> float:
    """First zero of the denominator for the terminal-reward branch; inf when gamma < 2 mu_k."""
    if gamma <= 2.0 * mu_k:
        return math.inf
    return math.log(gamma / (gamma - 2.0 * mu_k)) / (2.0 * mu_k)


def riccati_mode_solution(mu_k: float, gamma: float, T: float, sign: Sign = "p1_negative") -> RiccatiModeSolution:
    if sign == "p1_negative":
        if abs(gamma - 2.0 * mu_k) <= _DEGENERATE_TOL * 2.0 * mu_k:
            raise DegenerateConstantError(f"gamma = 2 mu_k = {gamma:.6g}: the integration constant is undefined")
        p0, escape = -gamma, riccati_escape_time(mu_k, gamma)
    else:
        p0, escape = gamma, math.inf
    return RiccatiModeSolution(
        mu_k=mu_k,
        gamma=gamma,
        C_k=integration_constant(mu_k, p0),
        sign=sign,
        horizon_T=T,
        escape_time=escape,
        valid_on_horizon=escape > T,
    )


def _mode_tuple(domain: DomainSpec, k: int) -> Tuple[int, int]:
    return divmod(k, domain.modes_N + 1)


def _denominator(mu, C, t):
    return 1.0 / (2.0 * mu) + C * np.exp(-2.0 * mu * t)


def riccati_values(sol: RiccatiModeSolution, t) -> np.ndarray:
    """p(t) for one mode; raises BlowUpError past the escape time."""
    t = np.asarray(t, dtype=float)
    if np.any(t >= sol.escape_time):
        raise BlowUpError(sol.escape_time)
    mu, C = sol.mu_k, sol.C_k
    p = -2.0 * mu * C * np.exp(-2.0 * mu * t) / _denominator(mu, C, t)
    p0 = -sol.gamma if sol.sign == "p1_negative" else sol.gamma
    return np.where(t == 0.0, p0, p)


def riccati_p1_mode(mu_k: float, gamma: float, t: float) -> float:
    sol = riccati_mode_solution(mu_k, gamma, max(t, 1e-300))
    return float(riccati_values(sol, t))


def law_table(law: FeedbackLaw, t) -> np.ndarray:
    """p_k(t) for every mode, shape t.shape + (K,)."""
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape + (len(law.mode_solutions),))
    for k, sol in enumerate(law.mode_solutions):
        try:
            out[..., k] = riccati_values(sol, t)
        except BlowUpError as exc:
            raise BlowUpError(exc.escape_time, mode=_mode_tuple(law.domain, k)) from exc
    return out


def log_growth(law: FeedbackLaw, s) -> np.ndarray:
    """z_k(s) / z_k(0) = exp(int_0^s p_k), shape s.shape + (K,)."""
    s = np.asarray(s, dtype=float)[..., None]
    mu = np.array([sol.mu_k for sol in law.mode_solutions])
    C = np.array([sol.C_k for sol in law.mode_solutions])
    return _denominator(mu, C, s) / _denominator(mu, C, 0.0)


def build_law(domain: DomainSpec, rho: float, diffusion: float, gamma: float, T: float, sign: Sign) -> FeedbackLaw:
    mus = a_eigenvalues(domain, rho, diffusion).reshape(-1)
    solutions = [riccati_mode_solution(float(mu), gamma, T, sign) for mu in mus]
    return FeedbackLaw(domain=domain, mode_solutions=solutions, horizon_T=T)


def require_unit_effectiveness(params: ModelParams) -> None:
    """The LQ problems assume B = I, i.e. b = 1 on the whole rectangle."""
    G = galerkin_b_matrix(params)
    if np.max(np.abs(G - np.eye(G.shape[0]))) > _UNIT_B_TOL:
        raise ConfigurationError("linear-quadratic problems require effectiveness b = 1 everywhere")


def value_function(law: FeedbackLaw, t: float, y: SpectralField) -> float:
    """<P(T - t) y, y>."""
    if y.domain != law.domain:
        raise ConfigurationError("state and feedback law live on different domains")
    if not 0.0 <= t <= law.horizon_T:
        raise ValueError(f"t = {t} outside [0, {law.horizon_T}]")
    return float(np.sum(law_table(law, law.horizon_T - t) * y.flat**2))


def synthesize_p1(params: ModelParams, steps: Optional[int] = None) -> P1Solution:
    """Closed-loop optimal trajectory, control and value of the indefinite problem."""
    require_unit_effectiveness(params)
    domain, T, gamma = params.domain, params.horizon_T, params.gamma
    margin = wellposedness_margin(gamma, params.rho, T)
    if margin <= 0:
        raise IllPosedError(margin)

    law = build_law(domain, params.rho, params.diffusion, gamma, T, "p1_negative")
    for k, sol in enumerate(law.mode_solutions):
        if not sol.valid_on_horizon:
            raise BlowUpError(sol.escape_time, mode=_mode_tuple(domain, k))

    times = time_grid(T, steps)
    mu = np.array([sol.mu_k for sol in law.mode_solutions])
    growth = log_growth(law, T - times) / log_growth(law, T)
    states = params.x0.flat[None, :] * np.exp(-np.outer(times, mu)) * growth
    controls = -law_table(law, T - times) * states
    value = float(np.sum(law_table(law, T) * params.x0.flat**2))
    logger.info("P1 synthesized: margin %.6g, value %.10g", margin, value)

    shape = (times.size,) + domain.shape
    return P1Solution(
        law=law,
        trajectory=Trajectory(times=times, domain=domain, coeffs=states.reshape(shape)),
        control=ControlSignal(times=times, domain=domain, coeffs=controls.reshape(shape)),
        value=value,
        margin=margin,
    )


def evaluate_J_i(params: ModelParams, u: ControlSignal) -> float:
    """-gamma |x(T)|^2 + int |u|^2, via mild_solve and Parseval."""
    traj = mild_solve(params, u)
    terminal = float(np.sum(traj.final.coeffs**2))
    return -params.gamma * terminal + control_norm_squared(u, params)


def coercivity_witness(gamma: float, rho: float, T: float, domain: DomainSpec, steps: Optional[int] = None) -> Tuple[ControlSignal, float]:
    """v(s) = e^{-rho (T - s)} constant in space; <Psi v, v> = C LH - gamma C^2 LH."""
    times = time_grid(T, steps)
    coeffs = np.zeros((times.size,) + domain.shape)
    coeffs[:, 0, 0] = math.sqrt(domain.area) * np.exp(-rho * (T - times))
    C = decay_energy(rho, T)
    quadform = C * domain.area - gamma * C**2 * domain.area
    return ControlSignal(times=times, domain=domain, coeffs=coeffs), quadform
