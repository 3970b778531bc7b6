"""
Finite-Difference Oracle
------------------------
Direct discretization of x_t = D Laplace x - rho x + b u on a cell-centred
nx x ny grid. Neumann walls use mirrored ghost cells, so every column of the
discrete Laplacian sums to zero and total mass only changes through -rho x
and the forcing.

Time stepping is Crank-Nicolson. The first step is replaced by two
backward-Euler half steps, which damps the high-frequency content of
nonsmooth data and keeps nonnegative data nonnegative.
"""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from app import config
from app.errors import ConfigurationError
from app.models.schemas import ControlSignal, GridField, GridSeries, ModelParams
from app.solvers.dynamics import effectiveness_at, time_grid
from app.spectral.basis import axis_table, evaluate_grid

logger = logging.getLogger(__name__)


def neumann_laplacian_1d(n: int, length: float) -> sparse.csc_matrix:
    """Second difference on n cells with mirrored ghosts."""
    h = length / n
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0
    off = np.ones(n - 1)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csc") / h**2


def fd_operator(params: ModelParams, nx: int, ny: int) -> sparse.csc_matrix:
    """D (Lxx (x) I + I (x) Lyy) - rho I acting on values[i, j] flattened row-major."""
    lx = neumann_laplacian_1d(nx, params.domain.length_L)
    ly = neumann_laplacian_1d(ny, params.domain.height_H)
    lap = sparse.kron(lx, sparse.identity(ny)) + sparse.kron(sparse.identity(nx), ly)
    return (params.diffusion * lap - params.rho * sparse.identity(nx * ny)).tocsc()


class _ForcingSampler:
    """b(xi) u(t, xi) at the cell centres."""

    def __init__(self, params: ModelParams, u: ControlSignal, nx: int, ny: int) -> None:
        domain = params.domain
        self.xs = (np.arange(nx) + 0.5) * domain.length_L / nx
        self.ys = (np.arange(ny) + 0.5) * domain.height_H / ny
        self.X, self.Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        self.b = effectiveness_at(params, self.X, self.Y)
        self.u = u
        if not u.is_rule:
            self.t1 = axis_table(domain.modes_M + 1, domain.length_L, self.xs)
            self.t2 = axis_table(domain.modes_N + 1, domain.height_H, self.ys)
            self.table = u.coeffs.reshape(u.times.size, -1)
            self.shape = domain.shape

    def __call__(self, t: float) -> np.ndarray:
        if self.u.is_rule:
            values = np.broadcast_to(self.u.rule(t, self.X, self.Y), self.X.shape)
        else:
            coeffs = np.array([np.interp(t, self.u.times, col) for col in self.table.T]).reshape(self.shape)
            values = self.t1.T @ coeffs @ self.t2
        return (self.b * values).reshape(-1)


def fd_solve(
    params: ModelParams,
    u: ControlSignal,
    nx: Optional[int] = None,
    ny: Optional[int] = None,
    steps: Optional[int] = None,
    smoothing_steps: int = 2,
) -> GridSeries:
    """Crank-Nicolson frames on [0, T] at T/steps spacing."""
    nx = config.DEFAULT_FD_CELLS if nx is None else nx
    ny = config.DEFAULT_FD_CELLS if ny is None else ny
    steps = config.DEFAULT_FD_STEPS if steps is None else steps
    if nx <= 0 or ny <= 0 or steps <= 0:
        raise ConfigurationError(f"grid dimensions must be positive, got nx={nx}, ny={ny}, steps={steps}")
    if u.domain is not None and u.domain != params.domain:
        raise ConfigurationError("control and model live on different domains")

    domain, T = params.domain, params.horizon_T
    times = time_grid(T, steps)
    dt = T / steps
    A = fd_operator(params, nx, ny)
    eye = sparse.identity(nx * ny, format="csc")
    implicit = splu((eye - 0.5 * dt * A).tocsc())
    explicit = (eye + 0.5 * dt * A).tocsr()
    forcing = _ForcingSampler(params, u, nx, ny)

    state = evaluate_grid(params.x0, nx, ny).values.reshape(-1)
    frames = [state.copy()]
    g_prev = forcing(0.0)
    start = 0
    if smoothing_steps and steps > 0:
        # two backward-Euler half steps share the Crank-Nicolson matrix
        half = 0.5 * dt
        state = implicit.solve(state + half * forcing(half))
        state = implicit.solve(state + half * forcing(dt))
        frames.append(state.copy())
        g_prev = forcing(dt)
        start = 1
    for j in range(start, steps):
        g_next = forcing(float(times[j + 1]))
        state = implicit.solve(explicit @ state + 0.5 * dt * (g_prev + g_next))
        frames.append(state.copy())
        g_prev = g_next

    logger.debug("fd_solve: %d x %d cells, %d steps", nx, ny, steps)
    grids = [GridField(nx=nx, ny=ny, length_L=domain.length_L, height_H=domain.height_H, values=v) for v in frames]
    return GridSeries(times=times, frames=grids)


def grid_mass(grid: GridField) -> float:
    """Midpoint-rule integral of a grid function."""
    return float(np.sum(grid.values)) * (grid.length_L / grid.nx) * (grid.height_H / grid.ny)
