import math

import numpy as np
import pytest

from app.errors import ConfigurationError, InfeasibleError
from app.models.schemas import ControlRule, ControlSignal, DualArc, ObjectiveRule
from app.solvers.dynamics import control_norm_squared, evaluate_objective_general, mild_solve, sample_control, time_grid
from app.solvers.maximum_principle import (
    argmax_linear_capped,
    argmax_quadratic_capped,
    budget_energy,
    conjugate_linear_capped,
    conjugate_quadratic_capped,
    dual_arc_eval,
    dual_arc_field,
    solve_budget_constrained,
    strategy_linear_reward_linear_cost,
    strategy_linear_reward_quadratic_cost,
    switching_time,
)
from app.spectral.basis import constant_field, mode_field, project, zero_field
from app.verification.gateaux import gateaux_gradient_norm, table_norm

ZETAS = [-1.0, 0.0, 0.3, 1.0, 1.7, 2.0, 3.5]


@pytest.mark.parametrize("zeta", ZETAS)
def test_quadratic_conjugate_matches_brute_force(zeta):
    R = 2.0
    u = np.linspace(0.0, R, 200001)
    objective = zeta * u - 0.5 * u**2
    assert conjugate_quadratic_capped(zeta, R) == pytest.approx(objective.max(), abs=1e-9)
    assert argmax_quadratic_capped(zeta, R) == pytest.approx(u[objective.argmax()], abs=2e-5)


def test_quadratic_conjugate_branches():
    assert conjugate_quadratic_capped(-1.0, 2.0) == 0.0
    assert conjugate_quadratic_capped(1.0, 2.0) == pytest.approx(0.5)
    assert conjugate_quadratic_capped(3.0, 2.0) == pytest.approx(4.0)
    np.testing.assert_allclose(argmax_quadratic_capped(np.array([-1.0, 1.0, 3.0]), 2.0), [0.0, 1.0, 2.0])


def test_nonpositive_cap_is_rejected():
    with pytest.raises(ValueError):
        conjugate_quadratic_capped(1.0, 0.0)


@pytest.mark.parametrize("zeta", ZETAS)
def test_linear_conjugate_matches_brute_force(zeta):
    R = 1.5
    u = np.linspace(0.0, R, 3001)
    assert conjugate_linear_capped(zeta, R) == pytest.approx(np.max(zeta * u - u), abs=1e-12)


def test_linear_argmax_tie_selects_zero():
    assert argmax_linear_capped(1.0, 3.0) == 0.0
    assert argmax_linear_capped(1.0 + 1e-9, 3.0) == 3.0
    assert argmax_linear_capped(0.2, 3.0) == 0.0


def test_quadratic_strategy_values(small_domain, make_params):
    params = make_params(small_domain, rho=0.5, T=2.0, b=constant_field(small_domain, 2.0), cap_R=1.5)
    u = strategy_linear_reward_quadratic_cost(params, steps=20)
    pts = np.array([0.3, 1.1, 1.9])
    for t in (0.0, 0.5, 1.2, 2.0):
        expected = min(2.0 * math.exp(-0.5 * (2.0 - t)), 1.5)
        np.testing.assert_allclose(u.rule(t, pts, pts), expected, rtol=1e-12)


def test_switching_time_formula():
    assert switching_time(2.0, 0.5, 2.0) == pytest.approx(2.0 - math.log(2.0) / 0.5)
    assert switching_time(1.0, 0.5, 2.0) == 2.0
    assert switching_time(100.0, 0.5, 2.0) == 0.0


def test_bang_bang_switches_once(small_domain, make_params):
    params = make_params(small_domain, rho=0.5, T=2.0, b=constant_field(small_domain, 2.0), cap_R=1.5)
    u = strategy_linear_reward_linear_cost(params, steps=20)
    pts = np.array([0.5, 1.5])
    t_s = switching_time(2.0, 0.5, 2.0)
    assert 0.5 < t_s < 0.7
    np.testing.assert_allclose(u.rule(0.5, pts, pts), 0.0)
    np.testing.assert_allclose(u.rule(0.7, pts, pts), 1.5)
    np.testing.assert_allclose(u.rule(2.0, pts, pts), 1.5)


def test_bang_bang_without_a_cap_is_rejected(small_domain, make_params):
    with pytest.raises(ConfigurationError):
        strategy_linear_reward_linear_cost(make_params(small_domain))


def test_constant_dual_arc_ignores_diffusion(small_domain):
    for diffusion in (0.0, 1.0, 5.0):
        dual = DualArc(rho=0.4, horizon_T=3.0, diffusion=diffusion)
        assert dual_arc_eval(dual, 1.0, (0.2, 1.3)) == pytest.approx(math.exp(-0.8))
        field = dual_arc_field(dual, 1.0, small_domain)
        expected = constant_field(small_domain, math.exp(-0.8)).coeffs
        np.testing.assert_allclose(field.coeffs, expected, atol=1e-14)


def test_strategy_is_the_same_with_and_without_diffusion(unit_square, make_params):
    b = constant_field(unit_square, 1.0)
    b = b.with_coeffs(b.coeffs + mode_field(unit_square, 1, 1, 0.3).coeffs)
    x0 = constant_field(unit_square, 0.5)
    x0 = x0.with_coeffs(x0.coeffs + mode_field(unit_square, 1, 0, 0.4).coeffs)
    diffusive = make_params(unit_square, rho=0.5, T=1.0, x0=x0, b=b, cap_R=1.2)
    frozen = make_params(unit_square, rho=0.5, T=1.0, x0=x0, b=b, cap_R=1.2, diffusion=0.0)
    u_diffusive = strategy_linear_reward_quadratic_cost(diffusive, steps=50)
    u_frozen = strategy_linear_reward_quadratic_cost(frozen, steps=50)

    X, Y = np.meshgrid(np.linspace(0.0, 1.0, 11), np.linspace(0.0, 1.0, 11), indexing="ij")
    for t in (0.0, 0.4, 1.0):
        np.testing.assert_allclose(u_diffusive.rule(t, X, Y), u_frozen.rule(t, X, Y), atol=1e-12)

    gap = mild_solve(diffusive, u_diffusive).final.coeffs - mild_solve(frozen, u_frozen).final.coeffs
    assert np.linalg.norm(gap) > 1e-3


def test_dual_arc_from_an_eigenmode(unit_square):
    dual = DualArc(rho=0.4, horizon_T=1.0, terminal=mode_field(unit_square, 1, 0))
    mu = math.pi**2 + 0.4
    value = dual_arc_eval(dual, 0.75, (0.1, 0.6))
    assert value == pytest.approx(math.exp(-0.25 * mu) * math.sqrt(2.0) * math.cos(0.1 * math.pi), rel=1e-12)


def test_dual_arc_time_outside_horizon(small_domain):
    with pytest.raises(ValueError):
        dual_arc_field(DualArc(rho=1.0, horizon_T=1.0), 1.5, small_domain)


def test_budget_spends_exactly_the_budget(small_domain, make_params):
    params = make_params(small_domain, rho=0.5, T=1.0, b=constant_field(small_domain, 1.5))
    sol = solve_budget_constrained(params, 2.0, steps=2000)
    assert sol.energy == pytest.approx(2.0, rel=1e-12)
    assert budget_energy(params, sol.lam) == pytest.approx(2.0, rel=1e-12)
    assert control_norm_squared(sol.control, params) == pytest.approx(2.0, rel=1e-5)


def test_budget_multiplier_closed_form(small_domain, make_params):
    params = make_params(small_domain, rho=0.5, T=1.0, b=constant_field(small_domain, 1.5))
    sol = solve_budget_constrained(params, 2.0)
    C = (1.0 - math.exp(-1.0)) / 1.0
    expected = math.sqrt(1.5**2 * small_domain.area * C) / (2.0 * math.sqrt(2.0))
    assert sol.lam == pytest.approx(expected, rel=1e-12)


def test_budget_without_effectiveness_is_infeasible(small_domain, make_params):
    params = make_params(small_domain, b=zero_field(small_domain))
    with pytest.raises(InfeasibleError):
        solve_budget_constrained(params, 1.0)


def test_budget_rejects_a_pointwise_cap(small_domain, make_params):
    with pytest.raises(ConfigurationError):
        solve_budget_constrained(make_params(small_domain, cap_R=2.0), 1.0)


def test_budget_must_be_positive(small_domain, make_params):
    with pytest.raises(ValueError):
        solve_budget_constrained(make_params(small_domain), 0.0)


def _objective(params, u):
    cost = ObjectiveRule(tag="capped_quadratic", scale=0.5, cap=params.cap_R)
    return evaluate_objective_general(params, mild_solve(params, u), u, "linear", cost)


def test_quadratic_strategy_beats_admissible_perturbations(small_domain, make_params):
    params = make_params(small_domain, rho=0.5, T=1.0, cap_R=0.8)
    best = strategy_linear_reward_quadratic_cost(params, steps=400)
    best_value = _objective(params, best)

    def perturbed(shift, scale):
        def rule(t, xi1, xi2):
            return np.clip(scale * best.rule(t, xi1, xi2) + shift * np.cos(math.pi * xi1 / 2.0), 0.0, 0.8)

        return ControlSignal(times=time_grid(1.0, 400), rule=ControlRule(tag="perturbed", fn=rule))

    for shift, scale in ((0.1, 1.0), (-0.1, 1.0), (0.0, 0.9), (0.05, 1.1)):
        assert _objective(params, perturbed(shift, scale)) < best_value - 1e-6


def test_bang_bang_beats_admissible_perturbations(small_domain, make_params):
    params = make_params(small_domain, rho=0.5, T=2.0, b=constant_field(small_domain, 2.0), cap_R=1.5)
    best = strategy_linear_reward_linear_cost(params, steps=400)
    cost = ObjectiveRule(tag="linear", scale=1.0)

    def value(u):
        return evaluate_objective_general(params, mild_solve(params, u), u, "linear", cost)

    early = ControlSignal(
        times=time_grid(2.0, 400),
        rule=ControlRule(tag="early", fn=lambda t, a, b: np.full(np.shape(a), 1.5 if t > 0.3 else 0.0)),
    )
    always = ControlSignal(times=time_grid(2.0, 400), rule=ControlRule(tag="always", fn=lambda t, a, b: np.full(np.shape(a), 1.5)))
    best_value = value(best)
    assert value(early) < best_value
    assert value(always) < best_value


def test_quadratic_conjugate_on_random_slopes(rng):
    R = 2.0
    u = np.linspace(0.0, R, 100001)
    zetas = np.concatenate([rng.uniform(-2.0 * R, 3.0 * R, 198), [R - 1e-9, R + 1e-9]])
    for zeta in zetas:
        assert conjugate_quadratic_capped(zeta, R) == pytest.approx(float(np.max(zeta * u - 0.5 * u**2)), abs=1e-8)
    assert conjugate_quadratic_capped(R - 1e-9, R) == pytest.approx(conjugate_quadratic_capped(R + 1e-9, R), abs=1e-8)


def _rich_effectiveness(domain):
    return project(domain, lambda x, y: 1.0 + 0.3 * np.cos(math.pi * x / domain.length_L))


def test_quadratic_strategy_beats_random_feasible_perturbations(small_domain, make_params, rng):
    R = 2.0
    params = make_params(small_domain, rho=0.5, T=1.0, b=_rich_effectiveness(small_domain), cap_R=R)
    best = strategy_linear_reward_quadratic_cost(params, steps=400)
    best_value = _objective(params, best)
    L, H = small_domain.length_L, small_domain.height_H

    for _ in range(50):
        eps = rng.uniform(0.02, 0.1)
        a = rng.normal(size=4)
        a /= np.sum(np.abs(a))

        def rule(t, xi1, xi2, a=a, eps=eps):
            wave = a[0] + a[1] * np.cos(math.pi * xi1 / L) + a[2] * np.cos(math.pi * xi2 / H) + a[3] * np.sin(4.0 * t)
            return np.clip(best.rule(t, xi1, xi2) + eps * wave, 0.0, R)

        other = ControlSignal(times=best.times, rule=ControlRule(tag="perturbed", fn=rule))
        assert _objective(params, other) < best_value


def test_quadratic_strategy_is_stationary_away_from_the_cap(small_domain, make_params):
    params = make_params(small_domain, rho=0.5, T=1.0, b=_rich_effectiveness(small_domain), cap_R=5.0)
    best = sample_control(strategy_linear_reward_quadratic_cost(params, steps=400), params)
    slope = gateaux_gradient_norm(lambda u: _objective(params, u), best, directions=6, seed=11)
    assert slope <= 1e-5 * (1.0 + table_norm(best))


def test_budget_control_is_a_lagrangian_critical_point(small_domain, make_params):
    params = make_params(small_domain, rho=0.5, T=1.0, b=_rich_effectiveness(small_domain))
    sol = solve_budget_constrained(params, 2.0, steps=4000)
    u = sample_control(sol.control, params)

    def lagrangian(v):
        reward = evaluate_objective_general(params, mild_solve(params, v), v, "linear", "zero")
        return -reward + sol.lam * control_norm_squared(v, params)

    slope = gateaux_gradient_norm(lagrangian, u, directions=6, seed=5)
    assert slope <= 1e-6 * (1.0 + table_norm(u))
