import numpy as np
import pytest

from varctrl import (
    GridFunction,
    SolverConfig,
    constant_control,
    evaluate_objective,
    forward_backward_sweep,
    make_grid,
    make_merton_problem,
    merton_closed_form,
    solve_kfe,
)
from varctrl.problems import ControlProblem
from varctrl.verification import central_half


def merton():
    return make_merton_problem(mu=0.1, sigma=0.2, q=0.5, T=1.0, x0=1.0)


@pytest.fixture(scope="module")
def merton_sweep():
    prob = merton()
    grid = make_grid(prob, n_t=150, n_x=150, x_min=1e-4, x_max=1e4)
    cfg = SolverConfig()
    result = forward_backward_sweep(prob, grid, cfg, c_init=constant_control(grid, 0.0))
    return prob, grid, cfg, result


def test_merton_sweep_reaches_constant_optimal_control(merton_sweep):
    prob, grid, cfg, result = merton_sweep
    closed = merton_closed_form(0.1, 0.2, 0.5, 1.0, 1.0)
    assert result.converged
    core = central_half(grid.n_x)
    assert np.max(np.abs(result.control.values[:, core] - closed.c_star)) <= 0.1


def test_merton_sweep_objective_matches_closed_form(merton_sweep):
    _, _, _, result = merton_sweep
    closed = merton_closed_form(0.1, 0.2, 0.5, 1.0, 1.0)
    assert abs(result.objective - closed.J_star) <= 0.01 * abs(closed.J_star)


def test_history_bookkeeping(merton_sweep):
    _, _, cfg, result = merton_sweep
    assert len(result.history) == result.iterations
    last = result.history[-1]
    assert last.control_change <= cfg.sweep_tol
    assert last.stationarity <= cfg.stationarity_tol


def test_fixed_point_consistency(merton_sweep):
    # one more backward+update pass moves the converged control by no
    # more than the sweep tolerance
    prob, grid, cfg, result = merton_sweep
    again = forward_backward_sweep(
        prob, grid, SolverConfig(max_sweeps=1, sweep_tol=cfg.sweep_tol), c_init=result.control
    )
    assert again.history[0].control_change <= cfg.sweep_tol


def test_determinism_bit_identical():
    prob = merton()
    grid = make_grid(prob, n_t=40, n_x=60, x_min=0.1, x_max=10.0)
    cfg = SolverConfig()
    r1 = forward_backward_sweep(prob, grid, cfg, c_init=constant_control(grid, 0.0))
    r2 = forward_backward_sweep(prob, grid, cfg, c_init=constant_control(grid, 0.0))
    assert np.array_equal(r1.control.values, r2.control.values)
    assert np.array_equal(r1.multiplier.values, r2.multiplier.values)
    assert np.array_equal(r1.density.values, r2.density.values)
    assert r1.objective == r2.objective
    assert r1.history == r2.history


def test_flat_objective_converges_in_one_sweep():
    # f = 0 and constant g: the Hamiltonian is flat, the update returns
    # the tie-break value (c_lo) everywhere, and J equals the constant
    prob = ControlProblem(
        drift=lambda t, x, c: 0.2 * np.asarray(x) * np.asarray(c),
        diffusion=lambda t, x, c: 0.1 * np.abs(np.asarray(c)) * np.asarray(x),
        running_reward=lambda t, x, c: np.zeros(np.broadcast(np.asarray(x), np.asarray(c)).shape),
        terminal_reward=lambda x: np.full_like(np.asarray(x, dtype=float), 3.7),
        horizon=1.0, initial_state=1.0, c_lo=0.5, c_hi=2.0,
    )
    grid = make_grid(prob, n_t=20, n_x=40, x_min=0.1, x_max=10.0, log_space=True)
    result = forward_backward_sweep(
        prob, grid, SolverConfig(), c_init=constant_control(grid, prob.c_lo)
    )
    assert result.converged
    assert result.iterations == 1
    assert np.all(result.control.values == prob.c_lo)
    assert result.objective == pytest.approx(3.7, rel=1e-10)


def test_non_convergence_returns_flag_not_exception():
    prob = merton()
    grid = make_grid(prob, n_t=30, n_x=50, x_min=0.1, x_max=10.0)
    result = forward_backward_sweep(
        prob, grid, SolverConfig(max_sweeps=1), c_init=constant_control(grid, 0.0)
    )
    assert not result.converged
    assert result.iterations == 1
    assert len(result.history) == 1


def test_default_initial_control_is_midpoint():
    prob = merton()
    grid = make_grid(prob, n_t=10, n_x=30, x_min=0.1, x_max=10.0)
    result = forward_backward_sweep(prob, grid, SolverConfig(max_sweeps=2))
    assert result.iterations >= 1  # ran without an explicit c_init


def test_rejects_out_of_bounds_initial_control():
    prob = merton()
    grid = make_grid(prob, n_t=10, n_x=30, x_min=0.1, x_max=10.0)
    with pytest.raises(ValueError):
        forward_backward_sweep(prob, grid, SolverConfig(), c_init=constant_control(grid, 12.0))


def test_objective_counts_terminal_mass():
    # f = 0, g = 1: J is the terminal mass, 1 under reflecting boundaries
    prob = ControlProblem(
        drift=lambda t, x, c: 0.2 * np.asarray(x) * np.asarray(c),
        diffusion=lambda t, x, c: 0.1 * np.abs(np.asarray(c)) * np.asarray(x),
        running_reward=lambda t, x, c: np.zeros(np.broadcast(np.asarray(x), np.asarray(c)).shape),
        terminal_reward=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        horizon=1.0, initial_state=1.0, c_lo=0.0, c_hi=2.0,
    )
    grid = make_grid(prob, n_t=25, n_x=50, x_min=0.05, x_max=20.0, log_space=True)
    cfg = SolverConfig()
    ctrl = constant_control(grid, 1.5)
    kfe = solve_kfe(prob, grid, ctrl, cfg)
    assert evaluate_objective(prob, grid, kfe.density, ctrl) == pytest.approx(1.0, abs=1e-8)


def test_objective_counts_running_time():
    # f = 1, g = 0: J = T exactly, by exact per-step mass conservation
    prob = ControlProblem(
        drift=lambda t, x, c: 0.2 * np.asarray(x) * np.asarray(c),
        diffusion=lambda t, x, c: 0.1 * np.abs(np.asarray(c)) * np.asarray(x),
        running_reward=lambda t, x, c: np.ones(np.broadcast(np.asarray(x), np.asarray(c)).shape),
        terminal_reward=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        horizon=2.0, initial_state=1.0, c_lo=0.0, c_hi=2.0,
    )
    grid = make_grid(prob, n_t=25, n_x=50, x_min=0.05, x_max=20.0, log_space=True)
    cfg = SolverConfig()
    ctrl = constant_control(grid, 1.5)
    kfe = solve_kfe(prob, grid, ctrl, cfg)
    assert evaluate_objective(prob, grid, kfe.density, ctrl) == pytest.approx(2.0, abs=1e-10)


def test_objective_requires_density_flag():
    prob = merton()
    grid = make_grid(prob, n_t=5, n_x=11, x_min=0.1, x_max=10.0)
    plain = GridFunction(np.ones((5, 11)), grid)
    with pytest.raises(ValueError):
        evaluate_objective(prob, grid, plain, constant_control(grid, 1.0))
