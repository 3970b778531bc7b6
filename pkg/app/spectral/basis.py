"""
Neumann Eigenbasis of the Rectangle
-----------------------------------
Eigenvalues, eigenfunctions and spectral transforms for the Laplacian on
[0, L] x [0, H] with zero normal derivative on the boundary:

    e_{m,n}(xi1, xi2) = nu_m nu_n cos(m pi xi1 / L) cos(n pi xi2 / H)
    lambda_{m,n}      = (m^2 / L^2 + n^2 / H^2) pi^2

with nu_0 = 1/sqrt(len) and nu_j = sqrt(2/len) per axis, so the family is
orthonormal in L2. Coefficients are stored as (M+1) x (N+1) arrays; the
flattened order is row-major (k = m (N+1) + n).
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Iterable, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from app.errors import DomainError
from app.models.schemas import DomainSpec, GridField, ModeIndex, SpectralField

_EDGE_TOL = 1e-12


def laplace_eigenvalue(domain: DomainSpec, idx: ModeIndex) -> float:
    """lambda_{m,n} for a retained mode."""
    if not idx.within(domain):
        raise DomainError(f"mode ({idx.m}, {idx.n}) is outside the truncation {domain.shape}")
    return (idx.m**2 / domain.length_L**2 + idx.n**2 / domain.height_H**2) * math.pi**2


def laplace_eigenvalues(domain: DomainSpec) -> np.ndarray:
    m = np.arange(domain.modes_M + 1)[:, None]
    n = np.arange(domain.modes_N + 1)[None, :]
    return (m**2 / domain.length_L**2 + n**2 / domain.height_H**2) * math.pi**2


def a_eigenvalue(domain: DomainSpec, idx: ModeIndex, rho: float, diffusion: float = 1.0) -> float:
    """mu_k = D lambda_k + rho, the negated eigenvalue of A = D Laplace - rho."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    return diffusion * laplace_eigenvalue(domain, idx) + rho


def a_eigenvalues(domain: DomainSpec, rho: float, diffusion: float = 1.0) -> np.ndarray:
    if rho <= 0:
        raise ValueError("rho must be positive")
    return diffusion * laplace_eigenvalues(domain) + rho


def _check_inside(domain: DomainSpec, xi1: np.ndarray, xi2: np.ndarray) -> None:
    tol1 = _EDGE_TOL * domain.length_L
    tol2 = _EDGE_TOL * domain.height_H
    if np.any(xi1 < -tol1) or np.any(xi1 > domain.length_L + tol1) or np.any(xi2 < -tol2) or np.any(xi2 > domain.height_H + tol2):
        raise DomainError(f"point outside [0, {domain.length_L}] x [0, {domain.height_H}]")


def axis_table(n_modes: int, length: float, points: np.ndarray) -> np.ndarray:
    """Rows j = 0..n_modes-1 of nu_j cos(j pi x / length) sampled at `points`."""
    j = np.arange(n_modes)[:, None]
    nu = np.where(j == 0, 1.0 / math.sqrt(length), math.sqrt(2.0 / length))
    return nu * np.cos(j * math.pi * np.asarray(points, dtype=float)[None, :] / length)


def eigenfunction_eval(domain: DomainSpec, idx: ModeIndex, xi1: float, xi2: float) -> float:
    if not idx.within(domain):
        raise DomainError(f"mode ({idx.m}, {idx.n}) is outside the truncation {domain.shape}")
    _check_inside(domain, np.asarray(xi1), np.asarray(xi2))
    nu1 = 1.0 / math.sqrt(domain.length_L) if idx.m == 0 else math.sqrt(2.0 / domain.length_L)
    nu2 = 1.0 / math.sqrt(domain.height_H) if idx.n == 0 else math.sqrt(2.0 / domain.height_H)
    return nu1 * nu2 * math.cos(idx.m * math.pi * xi1 / domain.length_L) * math.cos(idx.n * math.pi * xi2 / domain.height_H)


@lru_cache(maxsize=64)
def _gauss_axis(points: int, length: float) -> Tuple[np.ndarray, np.ndarray]:
    t, w = leggauss(points)
    x = 0.5 * length * (t + 1.0)
    w = 0.5 * length * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def quadrature_grid(domain: DomainSpec) -> Tuple[Tuple[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]:
    """Gauss-Legendre nodes and weights per axis: ((x1, w1), (x2, w2))."""
    return _gauss_axis(domain.quad_points, domain.length_L), _gauss_axis(domain.quad_points, domain.height_H)


@lru_cache(maxsize=64)
def quadrature_tables(domain: DomainSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenfunction tables on the quadrature nodes, shapes (M+1, q) and (N+1, q)."""
    (x1, _), (x2, _) = quadrature_grid(domain)
    t1 = axis_table(domain.modes_M + 1, domain.length_L, x1)
    t2 = axis_table(domain.modes_N + 1, domain.height_H, x2)
    t1.setflags(write=False)
    t2.setflags(write=False)
    return t1, t2


def project_samples(domain: DomainSpec, values: np.ndarray) -> SpectralField:
    """Coefficients of a function given by its values on the quadrature grid (q x q, xi1 first)."""
    (_, w1), (_, w2) = quadrature_grid(domain)
    t1, t2 = quadrature_tables(domain)
    weighted = np.asarray(values, dtype=float) * w1[:, None] * w2[None, :]
    return SpectralField(domain=domain, coeffs=t1 @ weighted @ t2.T)


def project(domain: DomainSpec, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> SpectralField:
    """<f, e_k> by tensor Gauss-Legendre quadrature; f is vectorized over meshgrid arrays."""
    (x1, _), (x2, _) = quadrature_grid(domain)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    values = np.broadcast_to(np.asarray(f(X1, X2), dtype=float), X1.shape)
    return project_samples(domain, values)


def reconstruct_on(field: SpectralField, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Synthesis on the tensor grid x1 x x2, returned with shape (len(x1), len(x2))."""
    domain = field.domain
    t1 = axis_table(domain.modes_M + 1, domain.length_L, x1)
    t2 = axis_table(domain.modes_N + 1, domain.height_H, x2)
    return t1.T @ field.coeffs @ t2


def reconstruct_quadrature(field: SpectralField) -> np.ndarray:
    t1, t2 = quadrature_tables(field.domain)
    return t1.T @ field.coeffs @ t2


def reconstruct(field: SpectralField, points: Iterable[Sequence[float]]) -> np.ndarray:
    """Pointwise synthesis sum_k c_k e_k(xi) at a list of (xi1, xi2) points."""
    pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
    domain = field.domain
    _check_inside(domain, pts[:, 0], pts[:, 1])
    t1 = axis_table(domain.modes_M + 1, domain.length_L, pts[:, 0])
    t2 = axis_table(domain.modes_N + 1, domain.height_H, pts[:, 1])
    return np.einsum("mp,mn,np->p", t1, field.coeffs, t2)


def project_grid(domain: DomainSpec, grid: GridField) -> SpectralField:
    """Coefficients of a cell-centred grid function by the midpoint rule."""
    if abs(grid.length_L - domain.length_L) > _EDGE_TOL * domain.length_L or abs(grid.height_H - domain.height_H) > _EDGE_TOL * domain.height_H:
        raise DomainError("grid extents do not match the domain")
    xs, ys = grid.centers()
    t1 = axis_table(domain.modes_M + 1, domain.length_L, xs)
    t2 = axis_table(domain.modes_N + 1, domain.height_H, ys)
    cell = (domain.length_L / grid.nx) * (domain.height_H / grid.ny)
    return SpectralField(domain=domain, coeffs=cell * (t1 @ grid.values @ t2.T))


def evaluate_grid(field: SpectralField, nx: int, ny: int) -> GridField:
    domain = field.domain
    xs = (np.arange(nx) + 0.5) * domain.length_L / nx
    ys = (np.arange(ny) + 0.5) * domain.height_H / ny
    return GridField(nx=nx, ny=ny, length_L=domain.length_L, height_H=domain.height_H, values=reconstruct_on(field, xs, ys))


def sample_grid_field(grid: GridField, xi1: np.ndarray, xi2: np.ndarray) -> np.ndarray:
    """Piecewise-constant lookup of a grid function at arbitrary points."""
    i = np.clip(np.floor(np.asarray(xi1) / grid.length_L * grid.nx).astype(int), 0, grid.nx - 1)
    j = np.clip(np.floor(np.asarray(xi2) / grid.height_H * grid.ny).astype(int), 0, grid.ny - 1)
    return grid.values[i, j]


def inner(a: SpectralField, b: SpectralField) -> float:
    """L2 inner product through Parseval."""
    return float(np.sum(a.coeffs * b.coeffs))


def field_norm(field: SpectralField) -> float:
    return float(np.linalg.norm(field.coeffs))


def zero_field(domain: DomainSpec) -> SpectralField:
    return SpectralField(domain=domain, coeffs=np.zeros(domain.shape))


def constant_field(domain: DomainSpec, c: float) -> SpectralField:
    coeffs = np.zeros(domain.shape)
    coeffs[0, 0] = c * math.sqrt(domain.area)
    return SpectralField(domain=domain, coeffs=coeffs)


def mode_field(domain: DomainSpec, m: int, n: int, c: float = 1.0) -> SpectralField:
    if not ModeIndex(m=m, n=n).within(domain):
        raise DomainError(f"mode ({m}, {n}) is outside the truncation {domain.shape}")
    coeffs = np.zeros(domain.shape)
    coeffs[m, n] = c
    return SpectralField(domain=domain, coeffs=coeffs)
