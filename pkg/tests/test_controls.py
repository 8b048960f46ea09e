import numpy as np
import pytest

from varctrl import (
    HamiltonianSample,
    SolverConfig,
    constant_control,
    hamiltonian,
    make_grid,
    make_merton_problem,
    merton_closed_form,
    solve_adjoint,
    update_control_slice,
)
from varctrl.controls import lambda_derivatives, stationarity_residual
from varctrl.problems import ControlProblem
from varctrl.verification import central_half


def merton(**kw):
    params = dict(mu=0.1, sigma=0.2, q=0.5, T=1.0, x0=1.0)
    params.update(kw)
    return make_merton_problem(**params)


def test_hamiltonian_vanishes_for_zero_problem():
    prob = ControlProblem(
        drift=lambda t, x, c: np.zeros(np.broadcast(np.asarray(x), np.asarray(c)).shape),
        diffusion=lambda t, x, c: np.zeros(np.broadcast(np.asarray(x), np.asarray(c)).shape),
        running_reward=lambda t, x, c: np.zeros(np.broadcast(np.asarray(x), np.asarray(c)).shape),
        terminal_reward=lambda x: np.asarray(x, dtype=float),
        horizon=1.0, initial_state=0.5, c_lo=0.0, c_hi=2.0,
    )
    sample = HamiltonianSample(t=0.1, y=1.0, dlam=2.0, d2lam=-3.0)
    for c in (0.0, 0.7, 2.0):
        assert hamiltonian(prob, sample, c) == 0.0


def test_hamiltonian_merton_closed_expression():
    # at y = 1, dlam = 1, d2lam = -1: H(c) = mu c - sigma^2 c^2 / 2
    prob = merton()
    sample = HamiltonianSample(t=0.0, y=1.0, dlam=1.0, d2lam=-1.0)
    for c in (0.0, 1.0, 2.5, 5.0, 10.0):
        assert hamiltonian(prob, sample, c) == pytest.approx(
            0.1 * c - 0.5 * 0.04 * c * c, rel=1e-12, abs=1e-15
        )


def test_sample_rejects_nonfinite_derivatives():
    with pytest.raises(ValueError):
        HamiltonianSample(t=0.0, y=1.0, dlam=np.nan, d2lam=-1.0)


def test_update_zero_drift_gives_zero_control():
    # mu = 0: H = sigma^2 c^2 y^2 d2lam / 2 with d2lam < 0 peaks at c = 0
    prob = merton(mu=0.0)
    closed_shape = merton_closed_form(0.1, 0.2, 0.5, 1.0, 1.0)
    grid = make_grid(prob, n_t=4, n_x=101, x_min=0.1, x_max=10.0)
    lam_slice = closed_shape.multiplier(0.5, grid.x_nodes)  # any concave field
    c = update_control_slice(prob, grid, 0.5, lam_slice, SolverConfig())
    core = central_half(grid.n_x)
    assert np.all(c[core] == 0.0)


def test_update_recovers_constant_optimal_fraction():
    prob = merton()
    closed = merton_closed_form(0.1, 0.2, 0.5, 1.0, 1.0)
    grid = make_grid(prob, n_t=4, n_x=201, x_min=1e-3, x_max=1e3)
    lam_slice = closed.multiplier(0.4, grid.x_nodes)
    c = update_control_slice(prob, grid, 0.4, lam_slice, SolverConfig())
    core = central_half(grid.n_x)
    # central differences of the power field bias the derivative ratio by
    # (q dxi)^2 / 12 relative; allow 1.5x that
    bias = (0.5 * grid.d_xi) ** 2 / 12 * closed.c_star
    assert np.max(np.abs(c[core] - closed.c_star)) < 1.5 * bias


def test_update_matches_brute_force_scan():
    # exhaustive search over 1e5 equally spaced control values, every
    # node of a 10 x 10 mesh, random smooth multiplier fields
    prob = merton()
    grid = make_grid(prob, n_t=10, n_x=10, x_min=0.2, x_max=5.0)
    cfg = SolverConfig()
    rng = np.random.default_rng(77)
    scan = np.linspace(prob.c_lo, prob.c_hi, 100_001)
    spacing = scan[1] - scan[0]
    xi = grid.xi_nodes
    for trial in range(3):
        coef = rng.standard_normal(4)
        lam_field = (
            coef[0] + coef[1] * xi + coef[2] * np.sin(xi) + coef[3] * np.exp(0.4 * xi)
        )
        for n in range(grid.n_t):
            t = grid.t_nodes[n]
            c_fast = update_control_slice(prob, grid, t, lam_field, cfg)
            dlam, d2lam = lambda_derivatives(grid, lam_field)
            for j in range(grid.n_x):
                sample = HamiltonianSample(t=t, y=grid.x_nodes[j], dlam=dlam[j], d2lam=d2lam[j])
                values = hamiltonian(prob, sample, scan)
                c_ref = scan[np.argmax(values)]
                assert abs(c_fast[j] - c_ref) <= spacing + 1e-12, (trial, n, j)


def test_argmax_invariant_under_reward_scaling():
    prob = merton()
    grid = make_grid(prob, n_t=30, n_x=60, x_min=0.1, x_max=10.0)
    cfg = SolverConfig()
    ctrl = constant_control(grid, 5.0)
    lam = solve_adjoint(prob, grid, ctrl, cfg)
    alpha = 7.0
    scaled = prob.with_rewards(
        running_reward=lambda t, x, c: alpha * prob.running_reward(t, x, c),
        terminal_reward=lambda x: alpha * prob.terminal_reward(x),
    )
    lam_scaled = solve_adjoint(scaled, grid, ctrl, cfg)
    for n in (0, grid.n_t // 2):
        c1 = update_control_slice(prob, grid, grid.t_nodes[n], lam.values[n], cfg)
        c2 = update_control_slice(scaled, grid, grid.t_nodes[n], lam_scaled.values[n], cfg)
        # agreement at the maximizer's own precision: scaling perturbs the
        # finite-difference polish only through last-ulp rounding
        assert np.max(np.abs(c1 - c2)) < 1e-6 * (prob.c_hi - prob.c_lo)


def test_stationarity_residual_small_at_interior_maximizers():
    prob = merton()
    closed = merton_closed_form(0.1, 0.2, 0.5, 1.0, 1.0)
    grid = make_grid(prob, n_t=4, n_x=101, x_min=1e-2, x_max=1e2)
    cfg = SolverConfig()
    lam_slice = closed.multiplier(0.2, grid.x_nodes)
    c = update_control_slice(prob, grid, 0.2, lam_slice, cfg)
    res = stationarity_residual(prob, grid, 0.2, lam_slice, c)
    assert res <= cfg.stationarity_tol


def test_flat_hamiltonian_breaks_tie_to_smallest_control():
    prob = ControlProblem(
        drift=lambda t, x, c: np.zeros(np.broadcast(np.asarray(x), np.asarray(c)).shape),
        diffusion=lambda t, x, c: np.zeros(np.broadcast(np.asarray(x), np.asarray(c)).shape),
        running_reward=lambda t, x, c: np.zeros(np.broadcast(np.asarray(x), np.asarray(c)).shape),
        terminal_reward=lambda x: np.asarray(x, dtype=float),
        horizon=1.0, initial_state=0.5, c_lo=0.25, c_hi=2.0,
    )
    grid = make_grid(prob, n_t=3, n_x=11, x_min=0.1, x_max=1.0, log_space=False)
    c = update_control_slice(prob, grid, 0.0, np.ones(grid.n_x), SolverConfig())
    assert np.all(c == 0.25)


def test_nonfinite_hamiltonian_reports_location():
    prob = ControlProblem(
        drift=lambda t, x, c: np.where(np.asarray(x) > 0.5, np.nan, 0.0) * np.ones_like(np.asarray(c, dtype=float)),
        diffusion=lambda t, x, c: np.zeros(np.broadcast(np.asarray(x), np.asarray(c)).shape),
        running_reward=lambda t, x, c: np.zeros(np.broadcast(np.asarray(x), np.asarray(c)).shape),
        terminal_reward=lambda x: np.asarray(x, dtype=float),
        horizon=1.0, initial_state=0.3, c_lo=0.0, c_hi=1.0,
    )
    grid = make_grid(prob, n_t=3, n_x=11, x_min=0.0, x_max=1.0, log_space=False)
    with pytest.raises(ValueError, match="non-finite Hamiltonian"):
        update_control_slice(prob, grid, 0.0, grid.x_nodes, SolverConfig())
