import math

import numpy as np
import pytest

from varctrl import (
    GridFunction,
    SolverConfig,
    SweepResult,
    check_first_variations,
    constant_control,
    discrete_lagrangian,
    forward_backward_sweep,
    make_grid,
    make_merton_problem,
    merton_closed_form,
    monte_carlo_objective,
)
from varctrl.problems import ControlProblem
from varctrl.verification import central_half


def merton():
    return make_merton_problem(mu=0.1, sigma=0.2, q=0.5, T=1.0, x0=1.0)


@pytest.fixture(scope="module")
def converged():
    prob = merton()
    grid = make_grid(prob, n_t=150, n_x=150, x_min=1e-4, x_max=1e4)
    cfg = SolverConfig()
    result = forward_backward_sweep(prob, grid, cfg, c_init=constant_control(grid, 0.0))
    assert result.converged
    return prob, grid, cfg, result


def test_closed_form_reference_values():
    closed = merton_closed_form(0.1, 0.2, 0.5, 1.0, 1.0)
    assert closed.c_star == pytest.approx(5.0, rel=1e-12)
    assert closed.J_star == pytest.approx(2.0 * math.exp(0.125), rel=1e-12)
    assert closed.J_star == pytest.approx(2.26630, abs=5e-6)
    assert closed.Sigma == pytest.approx(1.0, rel=1e-12)
    assert closed.m == pytest.approx(0.5, rel=1e-12)

    other = merton_closed_form(0.05, 0.3, -1.0, 1.0, 1.0)
    assert other.c_star == pytest.approx(0.05 / (2.0 * 0.09), rel=1e-12)


def test_h_terminal_value_is_one():
    for params in ((0.1, 0.2, 0.5, 1.0, 1.0), (0.05, 0.3, -1.0, 2.0, 0.7)):
        closed = merton_closed_form(*params)
        assert closed.h(closed.T) == 1.0


def test_closed_form_rejects_bad_parameters():
    with pytest.raises(ValueError):
        merton_closed_form(0.1, 0.0, 0.5, 1.0, 1.0)
    with pytest.raises(ValueError):
        merton_closed_form(0.1, 0.2, 1.2, 1.0, 1.0)
    with pytest.raises(ValueError):
        merton_closed_form(0.1, 0.2, 0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        merton_closed_form(0.1, 0.2, 0.5, 1.0, -1.0)


def test_closed_form_density_normalized():
    closed = merton_closed_form(0.1, 0.2, 0.5, 1.0, 1.0)
    y = np.exp(np.linspace(-9, 9, 4001))
    vals = closed.density(1.0, y)
    mass = np.trapezoid(vals * y, np.log(y))
    assert mass == pytest.approx(1.0, abs=1e-6)


def test_mc_degenerate_paths_are_exact():
    # b = a = f = 0 and g(x) = x: every path stays at x0
    prob = ControlProblem(
        drift=lambda t, x, c: np.zeros(np.broadcast(np.asarray(x), np.asarray(c)).shape),
        diffusion=lambda t, x, c: np.zeros(np.broadcast(np.asarray(x), np.asarray(c)).shape),
        running_reward=lambda t, x, c: np.zeros(np.broadcast(np.asarray(x), np.asarray(c)).shape),
        terminal_reward=lambda x: np.asarray(x, dtype=float),
        horizon=1.0, initial_state=0.7, c_lo=0.0, c_hi=1.0,
    )
    grid = make_grid(prob, n_t=5, n_x=11, x_min=0.0, x_max=2.0, log_space=False)
    est = monte_carlo_objective(prob, constant_control(grid, 0.5), n_paths=64, n_steps=8, seed=1)
    assert est.mean == pytest.approx(0.7, abs=1e-15)
    assert est.std_error <= 1e-15
    assert est.n_exploded == 0


def test_mc_reproducible_from_seed():
    prob = merton()
    grid = make_grid(prob, n_t=20, n_x=40, x_min=0.1, x_max=10.0)
    ctrl = constant_control(grid, 5.0)
    a = monte_carlo_objective(prob, ctrl, n_paths=500, n_steps=20, seed=11)
    b = monte_carlo_objective(prob, ctrl, n_paths=500, n_steps=20, seed=11)
    assert a == b
    c = monte_carlo_objective(prob, ctrl, n_paths=500, n_steps=20, seed=12)
    assert c.mean != a.mean


def test_mc_matches_closed_form_within_three_se():
    prob = merton()
    closed = merton_closed_form(0.1, 0.2, 0.5, 1.0, 1.0)
    grid = make_grid(prob, n_t=20, n_x=60, x_min=1e-3, x_max=1e3)
    est = monte_carlo_objective(
        prob, constant_control(grid, closed.c_star), n_paths=20_000, n_steps=200, seed=3
    )
    assert abs(est.mean - closed.J_star) <= 3.0 * est.std_error


def test_mc_counts_exploded_paths():
    # violent dynamics drive some wealth paths negative, where the power
    # utility is undefined; those paths must be excluded and counted
    prob = make_merton_problem(mu=0.1, sigma=5.0, q=0.5, T=1.0, x0=1.0)
    grid = make_grid(prob, n_t=10, n_x=30, x_min=0.01, x_max=100.0)
    est = monte_carlo_objective(prob, constant_control(grid, 10.0), n_paths=2000, n_steps=50, seed=5)
    assert est.n_exploded > 0
    assert np.isfinite(est.mean)


def test_mc_validates_arguments():
    prob = merton()
    grid = make_grid(prob, n_t=5, n_x=11, x_min=0.1, x_max=10.0)
    with pytest.raises(ValueError):
        monte_carlo_objective(prob, constant_control(grid, 1.0), n_paths=1, n_steps=5, seed=0)


def test_mc_agrees_with_grid_quadrature(converged):
    prob, grid, cfg, result = converged
    est = monte_carlo_objective(prob, result.control, n_paths=20_000, n_steps=200, seed=9)
    assert abs(est.mean - result.objective) <= 3.0 * est.std_error


def test_lagrangian_two_forms_agree_on_arbitrary_fields():
    prob = merton()
    grid = make_grid(prob, n_t=12, n_x=24, x_min=0.1, x_max=10.0)
    cfg = SolverConfig()
    rng = np.random.default_rng(21)
    for _ in range(5):
        p = rng.uniform(0.0, 2.0, (grid.n_t, grid.n_x))
        c = rng.uniform(prob.c_lo, prob.c_hi, (grid.n_t, grid.n_x))
        lam = rng.standard_normal((grid.n_t, grid.n_x))
        a = discrete_lagrangian(prob, grid, p, c, lam, cfg, form="constraint")
        b = discrete_lagrangian(prob, grid, p, c, lam, cfg, form="integrated")
        assert abs(a - b) <= 1e-11 * max(1.0, abs(a))


def test_lagrangian_equals_objective_at_feasible_fields(converged):
    # when the density satisfies its equation the constraint term drops
    prob, grid, cfg, result = converged
    val = discrete_lagrangian(
        prob, grid, result.density.values, result.control.values,
        result.multiplier.values, cfg,
    )
    assert val == pytest.approx(result.objective, rel=1e-10)


def test_zero_perturbation_changes_nothing(converged):
    prob, grid, cfg, result = converged
    base = discrete_lagrangian(
        prob, grid, result.density.values, result.control.values,
        result.multiplier.values, cfg,
    )
    again = discrete_lagrangian(
        prob, grid, result.density.values + 0.0, result.control.values + 0.0,
        result.multiplier.values + 0.0, cfg,
    )
    assert again == base


def test_first_variations_vanish_at_converged_point(converged):
    prob, grid, cfg, result = converged
    report = check_first_variations(prob, grid, result, cfg, n_random=20, seed=0)
    assert report.passed
    assert max(report.residuals) <= 1e-3
    assert report.lagrangian_value == pytest.approx(result.objective, rel=1e-10)


def test_perturbed_control_raises_control_residual(converged):
    prob, grid, cfg, result = converged
    base = check_first_variations(prob, grid, result, cfg, n_random=10, seed=0)
    shifted = SweepResult(
        control=GridFunction(np.clip(result.control.values + 1.0, prob.c_lo, prob.c_hi), grid),
        multiplier=result.multiplier,
        density=result.density,
        objective=result.objective,
        iterations=result.iterations,
        history=result.history,
        converged=result.converged,
    )
    perturbed = check_first_variations(prob, grid, shifted, cfg, n_random=10, seed=0)
    assert perturbed.control_direction >= 10.0 * max(base.control_direction, 1e-12)


def test_central_half_slice():
    assert central_half(400) == slice(100, 300)
    assert central_half(10) == slice(2, 8)
