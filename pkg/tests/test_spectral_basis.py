import math

import numpy as np
import pytest

from app.errors import DomainError
from app.models.schemas import DomainSpec, ModeIndex
from app.spectral.basis import (
    a_eigenvalues,
    constant_field,
    eigenfunction_eval,
    evaluate_grid,
    field_norm,
    inner,
    laplace_eigenvalue,
    mode_field,
    project,
    project_grid,
    quadrature_grid,
    quadrature_tables,
    reconstruct,
    reconstruct_on,
)


def test_laplace_eigenvalues_on_unit_square(unit_square):
    assert laplace_eigenvalue(unit_square, ModeIndex(m=0, n=0)) == 0.0
    assert laplace_eigenvalue(unit_square, ModeIndex(m=1, n=0)) == pytest.approx(math.pi**2, rel=1e-14)
    assert laplace_eigenvalue(unit_square, ModeIndex(m=1, n=1)) == pytest.approx(2 * math.pi**2, rel=1e-14)


def test_eigenvalue_outside_truncation_is_rejected(unit_square):
    with pytest.raises(DomainError):
        laplace_eigenvalue(unit_square, ModeIndex(m=4, n=0))


def test_a_eigenvalues_without_diffusion_are_all_rho(unit_square):
    np.testing.assert_allclose(a_eigenvalues(unit_square, 0.7, diffusion=0.0), 0.7)


def test_quadrature_gram_matrix_is_identity():
    domain = DomainSpec(length_L=2.0, height_H=0.5, modes_M=5, modes_N=4, quad_points=24)
    (_, w1), (_, w2) = quadrature_grid(domain)
    t1, t2 = quadrature_tables(domain)
    np.testing.assert_allclose((t1 * w1) @ t1.T, np.eye(6), atol=1e-10)
    np.testing.assert_allclose((t2 * w2) @ t2.T, np.eye(5), atol=1e-10)


def test_project_constant_hits_only_the_mean_mode(unit_square):
    field = project(unit_square, lambda x, y: 2.5 + 0 * x)
    expected = np.zeros(unit_square.shape)
    expected[0, 0] = 2.5
    np.testing.assert_allclose(field.coeffs, expected, atol=1e-12)


def test_band_limited_function_round_trips(unit_square):
    def f(x, y):
        return 1.0 + 0.3 * np.cos(math.pi * x) - 0.1 * np.cos(2 * math.pi * x) * np.cos(3 * math.pi * y)

    field = project(unit_square, f)
    pts = [(0.0, 0.0), (0.3, 0.7), (1.0, 1.0), (0.5, 0.25)]
    np.testing.assert_allclose(reconstruct(field, pts), [f(x, y) for x, y in pts], atol=1e-10)


def test_eigenfunction_eval_agrees_with_synthesis(unit_square):
    field = mode_field(unit_square, 2, 1)
    value = eigenfunction_eval(unit_square, ModeIndex(m=2, n=1), 0.2, 0.9)
    assert reconstruct(field, [(0.2, 0.9)])[0] == pytest.approx(value, abs=1e-14)
    assert value == pytest.approx(2.0 * math.cos(0.4 * math.pi) * math.cos(0.9 * math.pi), abs=1e-14)


def test_points_outside_the_rectangle_raise(unit_square):
    with pytest.raises(DomainError):
        reconstruct(constant_field(unit_square, 1.0), [(1.2, 0.5)])
    with pytest.raises(DomainError):
        eigenfunction_eval(unit_square, ModeIndex(m=0, n=0), -0.1, 0.5)


def test_midpoint_projection_recovers_sampled_modes(unit_square, rng):
    coeffs = rng.standard_normal(unit_square.shape)
    field = constant_field(unit_square, 0.0).with_coeffs(coeffs)
    grid = evaluate_grid(field, 16, 12)
    np.testing.assert_allclose(project_grid(unit_square, grid).coeffs, coeffs, atol=1e-12)


def test_parseval_inner_product(unit_square):
    a = constant_field(unit_square, 2.0)
    b = mode_field(unit_square, 1, 0, 3.0)
    assert inner(a, b) == 0.0
    assert field_norm(a) == pytest.approx(2.0)
    assert field_norm(b) == pytest.approx(3.0)


def test_quadrature_must_resolve_the_modes():
    with pytest.raises(ValueError):
        DomainSpec(length_L=1.0, height_H=1.0, modes_M=8, modes_N=8, quad_points=10)


@pytest.mark.parametrize("m, n", [(0, 1), (1, 0), (2, 1), (3, 3)])
def test_eigenfunctions_satisfy_the_laplace_relation(m, n):
    domain = DomainSpec(length_L=2.0, height_H=1.0, modes_M=3, modes_N=3, quad_points=16)
    field = mode_field(domain, m, n)
    h = 1e-3
    x1 = np.linspace(0.1, 1.9, 7)
    x2 = np.linspace(0.1, 0.9, 5)
    centre = reconstruct_on(field, x1, x2)
    stencil = (
        reconstruct_on(field, x1 + h, x2)
        + reconstruct_on(field, x1 - h, x2)
        + reconstruct_on(field, x1, x2 + h)
        + reconstruct_on(field, x1, x2 - h)
        - 4.0 * centre
    ) / h**2
    lam = laplace_eigenvalue(domain, ModeIndex(m=m, n=n))
    scale = max(lam, 1.0) * float(np.max(np.abs(centre))) + 1.0
    assert float(np.max(np.abs(stencil + lam * centre))) <= 1e-4 * scale


def test_eigenfunctions_have_zero_normal_derivative():
    domain = DomainSpec(length_L=2.0, height_H=1.0, modes_M=3, modes_N=3, quad_points=16)
    field = mode_field(domain, 3, 2)
    along = np.linspace(0.05, 0.95, 9)

    def sample(x):
        return reconstruct_on(field, np.array([x]), along)

    def one_sided(h):
        # second-order differences across xi1 = 0 and xi1 = L
        left = (-3.0 * sample(0.0) + 4.0 * sample(h) - sample(2 * h)) / (2 * h)
        right = (3.0 * sample(2.0) - 4.0 * sample(2.0 - h) + sample(2.0 - 2 * h)) / (2 * h)
        return max(float(np.max(np.abs(left))), float(np.max(np.abs(right))))

    errors = [one_sided(h) for h in (2e-2, 1e-2, 5e-3)]
    assert errors[-1] < 1e-3
    assert errors[0] / errors[1] > 3.9 and errors[1] / errors[2] > 3.9


def test_projection_of_the_first_coordinate(unit_square):
    field = project(unit_square, lambda x, y: x)
    assert field.coeff(0, 0) == pytest.approx(0.5, abs=1e-12)
    assert field.coeff(1, 0) == pytest.approx(-2.0 * math.sqrt(2.0) / math.pi**2, abs=1e-12)
    assert field.coeff(2, 0) == pytest.approx(0.0, abs=1e-12)
    assert field.coeff(3, 0) == pytest.approx(-2.0 * math.sqrt(2.0) / (9.0 * math.pi**2), abs=1e-12)
    np.testing.assert_allclose(field.coeffs[:, 1:], 0.0, atol=1e-12)
