"""
Goodwill Dynamics
-----------------
Mild solution of the controlled goodwill equation in spectral coordinates.

Per mode k the state obeys x_k' = -mu_k x_k + u~_k(t) with
u~_k = <b u(t, .), e_k>. The convolution with the forcing is integrated
exactly for piecewise-linear-in-time forcing (first-order exponential
integrator with phi-functions), so large mu_k cause no stiffness.

Only the retained modes of b u are kept. When b or u is rough (a GridField
b with zero regions, say) the truncated forcing can dip below zero and the
state inherits a small Gibbs undershoot; mild_solve logs a warning when more
than 1% of the forcing energy falls outside the retained modes.
"""

from __future__ import annotations

import logging
import math
from typing import Optional, Union

import numpy as np
from pydantic import ValidationError
from scipy.integrate import trapezoid

from app import config
from app.errors import ConfigurationError
from app.models.schemas import (
    ControlSignal,
    GridField,
    ModelParams,
    ObjectiveRule,
    SpectralField,
    Trajectory,
)
from app.spectral.basis import (
    a_eigenvalues,
    axis_table,
    project_samples,
    quadrature_grid,
    quadrature_tables,
    reconstruct_quadrature,
    sample_grid_field,
)

logger = logging.getLogger(__name__)

_SERIES_CUTOFF = 1e-4
_TAIL_WARNING = 0.01


def time_grid(horizon: float, steps: Optional[int] = None) -> np.ndarray:
    steps = steps or config.DEFAULT_TIME_STEPS
    grid = np.linspace(0.0, horizon, steps + 1)
    grid[-1] = horizon
    return grid


def effectiveness_at(params: ModelParams, xi1: np.ndarray, xi2: np.ndarray) -> np.ndarray:
    """Pointwise b at broadcastable point arrays."""
    b = params.effectiveness_b
    xi1, xi2 = np.broadcast_arrays(np.asarray(xi1, dtype=float), np.asarray(xi2, dtype=float))
    if isinstance(b, GridField):
        return sample_grid_field(b, xi1, xi2)
    domain = b.domain
    t1 = axis_table(domain.modes_M + 1, domain.length_L, xi1.reshape(-1))
    t2 = axis_table(domain.modes_N + 1, domain.height_H, xi2.reshape(-1))
    return np.einsum("mp,mn,np->p", t1, b.coeffs, t2).reshape(xi1.shape)


def effectiveness_quadrature(params: ModelParams) -> np.ndarray:
    (x1, _), (x2, _) = quadrature_grid(params.domain)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    return effectiveness_at(params, X1, X2)


def galerkin_b_matrix(params: ModelParams) -> np.ndarray:
    """K x K matrix G[k, j] = <b e_j, e_k> on the quadrature grid."""
    domain = params.domain
    (_, w1), (_, w2) = quadrature_grid(domain)
    t1, t2 = quadrature_tables(domain)
    basis = np.einsum("mi,nj->mnij", t1, t2).reshape(domain.n_modes, -1)
    weights = (w1[:, None] * w2[None, :] * effectiveness_quadrature(params)).reshape(-1)
    return (basis * weights) @ basis.T


def multiply_by_b(params: ModelParams, field: SpectralField) -> SpectralField:
    """Coefficients of b*y: reconstruct on the quadrature grid, multiply, project."""
    if field.domain != params.domain:
        raise ConfigurationError("field and model live on different domains")
    values = reconstruct_quadrature(field) * effectiveness_quadrature(params)
    return project_samples(params.domain, values)


def rule_samples(u: ControlSignal, params: ModelParams, t: float) -> np.ndarray:
    """Values of a rule-based control on the quadrature grid at time t."""
    (x1, _), (x2, _) = quadrature_grid(params.domain)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    return np.broadcast_to(u.rule(t, X1, X2), X1.shape)


def _interpolate_table(u: ControlSignal, times: np.ndarray) -> np.ndarray:
    flat = u.coeffs.reshape(u.times.size, -1)
    out = np.empty((times.size, flat.shape[1]))
    for k in range(flat.shape[1]):
        out[:, k] = np.interp(times, u.times, flat[:, k])
    return out


def sample_control(u: ControlSignal, params: ModelParams, times: Optional[np.ndarray] = None) -> ControlSignal:
    """Coefficient-table version of any control on the given grid."""
    domain = params.domain
    times = u.times if times is None else np.asarray(times, dtype=float)
    if not u.is_rule:
        _check_domain(u, params)
        table = _interpolate_table(u, times)
    else:
        table = np.stack([project_samples(domain, rule_samples(u, params, float(t))).flat for t in times])
    return ControlSignal(times=times, domain=domain, coeffs=table)


def _check_domain(u: ControlSignal, params: ModelParams) -> None:
    if u.domain is not None and u.domain != params.domain:
        raise ConfigurationError("control and model live on different domains")


def _forcing(params: ModelParams, u: ControlSignal, times: np.ndarray) -> np.ndarray:
    """u~_k(t) = <b u(t), e_k> at each time, shape (len(times), K)."""
    if not u.is_rule:
        return _interpolate_table(u, times) @ galerkin_b_matrix(params).T
    b_quad = effectiveness_quadrature(params)
    return np.stack([project_samples(params.domain, b_quad * rule_samples(u, params, float(t))).flat for t in times])


def forcing_tail_fraction(params: ModelParams, u: ControlSignal, t: float) -> float:
    """Share of the energy of b u(t, .) lying outside the retained modes."""
    if u.is_rule:
        control = rule_samples(u, params, t)
    else:
        row = _interpolate_table(u, np.array([t]))[0]
        control = reconstruct_quadrature(SpectralField(domain=params.domain, coeffs=row.reshape(params.domain.shape)))
    values = effectiveness_quadrature(params) * control
    (_, w1), (_, w2) = quadrature_grid(params.domain)
    total = float(np.sum(values**2 * w1[:, None] * w2[None, :]))
    if total <= 0.0:
        return 0.0
    kept = float(np.sum(project_samples(params.domain, values).coeffs ** 2))
    return max(0.0, 1.0 - kept / total)


def phi_functions(z: np.ndarray):
    """phi1(z) = (e^z - 1)/z and phi2(z) = (e^z - 1 - z)/z^2, with series near 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, z)
    em1 = np.expm1(safe)
    phi1 = np.where(small, 1.0 + z / 2.0 + z**2 / 6.0 + z**3 / 24.0, em1 / safe)
    phi2 = np.where(small, 0.5 + z / 6.0 + z**2 / 24.0 + z**3 / 120.0, (em1 - safe) / safe**2)
    return phi1, phi2


def exponential_steps(mu: np.ndarray, grid: np.ndarray, x0: np.ndarray, forcing: np.ndarray) -> np.ndarray:
    """Exact solution of x' = -mu x + g for g linear between grid points; returns (len(grid), K)."""
    h = np.diff(grid)
    z = -h[:, None] * mu[None, :]
    decay = np.exp(z)
    phi1, phi2 = phi_functions(z)
    w_left = h[:, None] * (phi1 - phi2)
    w_right = h[:, None] * phi2
    states = np.empty((grid.size, mu.size))
    states[0] = x0
    for j in range(h.size):
        states[j + 1] = decay[j] * states[j] + w_left[j] * forcing[j] + w_right[j] * forcing[j + 1]
    return states


def _validate_times(times: np.ndarray, horizon: float) -> np.ndarray:
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size < 1 or times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise ConfigurationError("trajectory times must start at 0 and increase strictly")
    if times[-1] > horizon * (1 + 1e-12):
        raise ConfigurationError(f"trajectory times exceed the control horizon {horizon}")
    return times


def mild_solve(params: ModelParams, u: ControlSignal, times: Optional[np.ndarray] = None) -> Trajectory:
    """Variation-of-constants solution sampled at `times` (defaults to the control grid)."""
    _check_domain(u, params)
    domain = params.domain
    if times is None:
        times = u.times
    times = _validate_times(times, u.horizon)

    if u.is_rule:
        grid = times
    else:
        inner = u.times[u.times < times[-1]]
        grid = np.union1d(times, inner)
    index = np.searchsorted(grid, times)

    tail = max(forcing_tail_fraction(params, u, float(t)) for t in (grid[0], grid[-1]))
    if tail > _TAIL_WARNING:
        logger.warning("b u keeps only %.1f%% of its energy on the retained modes; expect Gibbs undershoot", 100.0 * (1.0 - tail))

    mu = a_eigenvalues(domain, params.rho, params.diffusion).reshape(-1)
    forcing = _forcing(params, u, grid)
    states = exponential_steps(mu, grid, params.x0.flat, forcing)
    states[0] = params.x0.flat
    logger.debug("mild_solve: %d steps over %d modes", grid.size - 1, mu.size)
    return Trajectory(times=times, domain=domain, coeffs=states[index].reshape((times.size,) + domain.shape))


def average_goodwill(traj: Trajectory) -> np.ndarray:
    """Total goodwill x_bar(t) = integral of x(t, .) over the rectangle."""
    return math.sqrt(traj.domain.area) * traj.coeffs[:, 0, 0]


def control_norm_squared(u: ControlSignal, params: ModelParams) -> float:
    """int_0^T |u(t)|^2 dt, trapezoid in time."""
    if not u.is_rule:
        _check_domain(u, params)
        per_time = np.sum(u.coeffs.reshape(u.times.size, -1) ** 2, axis=1)
    else:
        (_, w1), (_, w2) = quadrature_grid(params.domain)
        weights = w1[:, None] * w2[None, :]
        per_time = np.array([np.sum(weights * rule_samples(u, params, float(t)) ** 2) for t in u.times])
    return float(trapezoid(per_time, u.times))


def _as_rule(rule: Union[ObjectiveRule, str]) -> ObjectiveRule:
    if isinstance(rule, ObjectiveRule):
        return rule
    try:
        return ObjectiveRule(tag=rule)
    except ValidationError as exc:
        raise ConfigurationError(f"unsupported objective rule {rule!r}") from exc


def _apply_rule(rule: ObjectiveRule, values: np.ndarray) -> np.ndarray:
    if rule.tag == "zero":
        return np.zeros_like(values)
    if rule.tag == "linear":
        return rule.scale * values
    if rule.tag == "quadratic":
        return rule.scale * values**2
    cap = rule.cap if rule.cap is not None else math.inf
    slack = 1e-12 * max(1.0, cap if math.isfinite(cap) else 1.0)
    feasible = (values >= -slack) & (values <= cap + slack)
    return np.where(feasible, rule.scale * values**2, math.inf)


def evaluate_objective_general(
    params: ModelParams,
    traj: Trajectory,
    u: ControlSignal,
    phi0: Union[ObjectiveRule, str],
    h0: Union[ObjectiveRule, str],
) -> float:
    """int phi0(x(T)) d xi - int_0^T int h0(u) d xi dt (quadrature in space, trapezoid in time)."""
    phi0, h0 = _as_rule(phi0), _as_rule(h0)
    (_, w1), (_, w2) = quadrature_grid(params.domain)
    weights = w1[:, None] * w2[None, :]

    reward = float(np.sum(weights * _apply_rule(phi0, reconstruct_quadrature(traj.final))))

    t1, t2 = quadrature_tables(params.domain)
    running = np.empty(traj.times.size)
    table = None if u.is_rule else _interpolate_table(u, traj.times).reshape((traj.times.size,) + params.domain.shape)
    for j, t in enumerate(traj.times):
        if table is None:
            values = rule_samples(u, params, float(t))
        else:
            values = t1.T @ table[j] @ t2
        running[j] = np.sum(weights * _apply_rule(h0, values))
    cost = float(trapezoid(running, traj.times))
    return reward - cost


def decay_energy(rate: float, horizon: float) -> float:
    """C = int_0^T e^{-2 rate (T - s)} ds = (1 - e^{-2 rate T}) / (2 rate)."""
    return -math.expm1(-2.0 * rate * horizon) / (2.0 * rate)
