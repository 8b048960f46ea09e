"""Independent checks on solver output: closed forms for the
power-utility investment problem, a path-simulation estimate of the
objective, and a finite-difference check that the four first variations
of the discrete Lagrangian vanish at a candidate critical point.
"""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .forward import initial_delta
from .grids import GridFunction, SpaceTimeGrid
from .operators import assemble_adjoint, assemble_generator
from .problems import ControlProblem, SolverConfig
from .sweep import SweepResult


def central_half(n_x: int) -> slice:
    """Index slice selecting the central half of the space mesh, the
    region where comparisons against unbounded-domain closed forms are
    meaningful despite the domain truncation."""
    return slice(n_x // 4, n_x - n_x // 4)


# ---------------------------------------------------------------------------
# Closed forms for the power-utility investment problem


@dataclass(frozen=True)
class MertonClosedForm:
    """Exact solution bundle: optimal fraction c_star, multiplier time
    factor h(t) (h(T) = 1), lognormal density parameters (Sigma, m), and
    the optimal objective J_star."""

    mu: float
    sigma: float
    q: float
    T: float
    x0: float
    c_star: float
    Sigma: float
    m: float
    J_star: float

    def h(self, t) -> np.ndarray:
        """Multiplier time factor: lam(t, y) = h(t) * y**q / q."""
        rate = self.q * self.mu**2 / (2.0 * (1.0 - self.q) * self.sigma**2)
        return np.exp(rate * (self.T - np.asarray(t, dtype=float)))

    def multiplier(self, t, y) -> np.ndarray:
        return self.h(t) * np.asarray(y, dtype=float) ** self.q / self.q

    def density(self, t, y, extra_log_var: float = 0.0) -> np.ndarray:
        """Transition density of the optimally controlled state at time t.

        ``extra_log_var`` adds variance in log space, e.g. the squared
        width of a mollified initial condition, so the oracle matches a
        solve started from a narrow bump instead of an exact point mass.
        """
        y = np.asarray(y, dtype=float)
        var = self.Sigma**2 * t + extra_log_var
        if var <= 0:
            raise ValueError("density requires positive total variance")
        mean = math.log(self.x0) + (self.m - 0.5 * self.Sigma**2) * t
        z = (np.log(y) - mean) ** 2 / (2.0 * var)
        return np.exp(-z) / (y * math.sqrt(2.0 * math.pi * var))


def merton_closed_form(mu: float, sigma: float, q: float, T: float, x0: float) -> MertonClosedForm:
    """Evaluate the closed forms; parameter validation mirrors the
    problem builder (sigma > 0, x0 > 0, q < 1, q != 0)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if x0 <= 0:
        raise ValueError(f"x0 must be positive, got {x0}")
    if q >= 1 or q == 0:
        raise ValueError(f"risk exponent must satisfy q < 1, q != 0, got {q}")
    one_minus_q = 1.0 - q
    c_star = mu / (one_minus_q * sigma**2)
    Sigma = mu / (one_minus_q * sigma)
    m = mu**2 / (one_minus_q * sigma**2)
    J_star = x0**q / q * math.exp(q * mu**2 * T / (2.0 * one_minus_q * sigma**2))
    return MertonClosedForm(
        mu=mu, sigma=sigma, q=q, T=T, x0=x0, c_star=c_star, Sigma=Sigma, m=m, J_star=J_star
    )


# ---------------------------------------------------------------------------
# Path-simulation estimate of the objective


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    n_paths: int
    n_steps: int
    seed: int
    n_exploded: int = 0


def _interp_control(grid: SpaceTimeGrid, values: np.ndarray, t: float, x: np.ndarray) -> np.ndarray:
    """Bilinear control lookup in (t, grid coordinate), clamped to the
    domain edges."""
    tau = np.clip(t / grid.horizon, 0.0, 1.0) * (grid.n_t - 1)
    i0 = min(int(tau), grid.n_t - 2)
    wt = tau - i0

    xi = np.clip(grid.to_xi(np.maximum(x, grid.x_min if grid.log_space else -np.inf)),
                 grid.xi_min, grid.xi_max)
    s = (xi - grid.xi_min) / grid.d_xi
    j0 = np.minimum(s.astype(int), grid.n_x - 2)
    ws = s - j0

    row0 = values[i0]
    row1 = values[i0 + 1]
    c0 = row0[j0] * (1.0 - ws) + row0[j0 + 1] * ws
    c1 = row1[j0] * (1.0 - ws) + row1[j0 + 1] * ws
    return c0 * (1.0 - wt) + c1 * wt


def monte_carlo_objective(
    problem: ControlProblem,
    control: GridFunction,
    n_paths: int,
    n_steps: int,
    seed: int,
) -> MCEstimate:
    """Euler-Maruyama estimate of the objective under ``control``.

    Paths start at the problem's initial state and are driven on the
    unbounded state space; only the control lookup is clamped to the
    grid.  Paths that leave the coefficients' domain (non-finite state
    or reward) are excluded from the estimate and counted.
    """
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    grid = control.grid
    rng = np.random.default_rng(seed)
    dt = problem.horizon / n_steps
    sqdt = math.sqrt(dt)

    x = np.full(n_paths, float(problem.initial_state))
    running = np.zeros(n_paths)
    alive = np.ones(n_paths, dtype=bool)

    for k in range(n_steps):
        t_k = k * dt
        z = rng.standard_normal(n_paths)
        c = _interp_control(grid, control.values, t_k, np.where(alive, x, problem.initial_state))
        b = np.asarray(problem.drift(t_k, x, c), dtype=float)
        a = np.asarray(problem.diffusion(t_k, x, c), dtype=float)
        f = np.broadcast_to(np.asarray(problem.running_reward(t_k, x, c), dtype=float), x.shape)
        running = running + np.where(alive, f * dt, 0.0)
        x_new = x + b * dt + a * sqdt * z
        bad = ~np.isfinite(x_new)
        alive &= ~bad
        x = np.where(alive, x_new, x)

    with np.errstate(invalid="ignore", over="ignore"):
        reward = running + np.asarray(problem.terminal_reward(x), dtype=float)
    ok = alive & np.isfinite(reward)
    n_ok = int(np.count_nonzero(ok))
    n_exploded = n_paths - n_ok
    if n_ok < 2:
        raise ValueError("all simulated paths exploded; cannot form an estimate")
    sample = reward[ok]
    mean = float(np.mean(sample))
    std_error = float(np.std(sample, ddof=1) / math.sqrt(n_ok))
    return MCEstimate(
        mean=mean,
        std_error=std_error,
        n_paths=n_paths,
        n_steps=n_steps,
        seed=seed,
        n_exploded=n_exploded,
    )


# ---------------------------------------------------------------------------
# Discrete Lagrangian and its first variations


def _running_reward_rows(problem: ControlProblem, grid: SpaceTimeGrid, c: np.ndarray) -> np.ndarray:
    x = grid.x_nodes
    t = grid.t_nodes
    rows = np.empty((grid.n_t, grid.n_x))
    for n in range(grid.n_t):
        rows[n] = np.broadcast_to(
            np.asarray(problem.running_reward(t[n], x, c[n]), dtype=float), x.shape
        )
    return rows


def discrete_lagrangian(
    problem: ControlProblem,
    grid: SpaceTimeGrid,
    p: np.ndarray,
    c: np.ndarray,
    lam: np.ndarray,
    config: SolverConfig,
    form: str = "constraint",
) -> float:
    """Value of the discrete Lagrangian at an arbitrary triple.

    ``form="constraint"`` pairs the multiplier with the forward-equation
    residual; ``form="integrated"`` is the summation-by-parts rewrite
    where the generator acts on the multiplier and the time difference
    is moved onto it.  The two agree to round-off for any fields because
    the adjoint is an exact weighted transpose -- that identity is the
    discrete version of the integration by parts behind the variational
    derivation, and it is tested directly.

    The point-mass multiplier of the initial condition is eliminated
    analytically (perturbations of the density vanish at t = 0), so the
    Lagrangian takes only (p, c, lam).
    """
    w = grid.quad_weights
    jac = grid.jacobian
    t = grid.t_nodes
    dt = grid.dt
    theta = config.theta
    N = grid.n_t - 1
    q = np.asarray(p, dtype=float) * jac  # density w.r.t. the grid coordinate
    lam = np.asarray(lam, dtype=float)
    c = np.asarray(c, dtype=float)

    f_rows = _running_reward_rows(problem, grid, c)
    g_vals = np.asarray(problem.terminal_reward(grid.x_nodes), dtype=float)

    # objective part: J = sum_n dt <f_n, q_{n+1}> + <g, q_N>
    J = float(np.dot(w, g_vals * q[N]))
    for n in range(N):
        J += dt * float(np.dot(w, f_rows[n] * q[n + 1]))

    if form == "constraint":
        total = J
        for n in range(N):
            adj = assemble_adjoint(problem, grid, t[n], c[n])
            blend = theta * q[n + 1] + (1.0 - theta) * q[n]
            resid = q[n + 1] - q[n] - dt * adj.apply(blend)
            total -= float(np.dot(w, lam[n] * resid))
        return total

    if form == "integrated":
        total = J
        for n in range(N):
            gen = assemble_generator(problem, grid, t[n], c[n])
            blend = theta * q[n + 1] + (1.0 - theta) * q[n]
            total += dt * float(np.dot(w, gen.apply(lam[n]) * blend))
        # summation by parts of -sum_n <lam_n, q_{n+1} - q_n>
        total += float(np.dot(w, lam[0] * q[0])) - float(np.dot(w, lam[N - 1] * q[N]))
        for n in range(1, N):
            total += float(np.dot(w, (lam[n] - lam[n - 1]) * q[n]))
        return total

    raise ValueError(f"unknown Lagrangian form {form!r}")


def _smooth_field(rng: np.random.Generator, grid: SpaceTimeGrid, vanish_at_t0: bool) -> np.ndarray:
    """Random smooth bump on the space-time mesh, unit sup-norm: a few
    sine/cosine modes with decaying random coefficients.  White-noise
    perturbations would drown the finite differences in mesh noise."""
    tt = grid.t_nodes / grid.horizon
    ss = (grid.xi_nodes - grid.xi_min) / (grid.xi_max - grid.xi_min)
    out = np.zeros((grid.n_t, grid.n_x))
    for j in range(1, 4):
        tmode = np.sin(0.5 * np.pi * j * tt) if vanish_at_t0 else np.cos(np.pi * (j - 1) * tt)
        for k in range(1, 4):
            smode = np.sin(np.pi * k * ss)
            out += rng.normal() / (j * k) ** 2 * np.outer(tmode, smode)
    peak = np.max(np.abs(out))
    if peak == 0.0:
        out[:, :] = 0.0
        out[grid.n_t // 2, grid.n_x // 2] = 1.0
        peak = 1.0
    return out / peak


@dataclass(frozen=True)
class VariationReport:
    """Normalized first-variation residuals of the discrete Lagrangian
    at a candidate triple, maximized over random perturbation draws.

    Directions: density (tests the backward multiplier equation),
    control (pointwise stationarity), multiplier (the forward density
    equation), and the eliminated initial-condition multiplier, which
    reduces to the L1 distance between the initial slice and the
    mollified point mass."""

    density_direction: float
    control_direction: float
    multiplier_direction: float
    initial_condition: float
    lagrangian_value: float
    n_random: int
    seed: int
    tolerance: float

    @property
    def residuals(self) -> tuple[float, float, float, float]:
        return (
            self.density_direction,
            self.control_direction,
            self.multiplier_direction,
            self.initial_condition,
        )

    @property
    def max_residual(self) -> float:
        return max(self.residuals)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tolerance


def check_first_variations(
    problem: ControlProblem,
    grid: SpaceTimeGrid,
    candidate: SweepResult,
    config: SolverConfig,
    n_random: int = 20,
    seed: int = 0,
) -> VariationReport:
    """Central finite differences of the discrete Lagrangian along
    random smooth perturbations of each field.

    Density perturbations vanish at t = 0 (the initial slice is handled
    by the separate initial-condition residual).  At a converged sweep
    candidate all four residuals fall below ``config.variation_tol``.
    """
    p = candidate.density.values
    c = candidate.control.values
    lam = candidate.multiplier.values
    rng = np.random.default_rng(seed)

    L0 = discrete_lagrangian(problem, grid, p, c, lam, config)
    scale = abs(L0) + 1e-30

    def gateaux(field: str, direction: np.ndarray, eps: float) -> float:
        args = {"p": p, "c": c, "lam": lam}
        args[field] = args[field] + eps * direction
        plus = discrete_lagrangian(problem, grid, args["p"], args["c"], args["lam"], config)
        args[field] = args[field] - 2.0 * eps * direction
        minus = discrete_lagrangian(problem, grid, args["p"], args["c"], args["lam"], config)
        return (plus - minus) / (2.0 * eps)

    eps_p = 1e-2 * (np.max(np.abs(p)) + 1.0)
    eps_c = 1e-3 * (problem.c_hi - problem.c_lo)
    eps_l = 1e-2 * (np.max(np.abs(lam)) + 1.0)

    res_p = res_c = res_l = 0.0
    for _ in range(n_random):
        res_p = max(res_p, abs(gateaux("p", _smooth_field(rng, grid, vanish_at_t0=True), eps_p)))
        res_c = max(res_c, abs(gateaux("c", _smooth_field(rng, grid, vanish_at_t0=False), eps_c)))
        res_l = max(res_l, abs(gateaux("lam", _smooth_field(rng, grid, vanish_at_t0=False), eps_l)))

    delta0 = initial_delta(grid, problem.initial_state, config.delta_width_cells)
    wj = grid.quad_weights * grid.jacobian
    res_mu = float(np.dot(wj, np.abs(p[0] - delta0)))

    return VariationReport(
        density_direction=res_p / scale,
        control_direction=res_c / scale,
        multiplier_direction=res_l / scale,
        initial_condition=res_mu,
        lagrangian_value=L0,
        n_random=n_random,
        seed=seed,
        tolerance=config.variation_tol,
    )
