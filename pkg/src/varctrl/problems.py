"""Control problem definitions, solver configuration, and the problem catalog.

A control problem is a one-dimensional controlled diffusion

    dX_t = b(t, X_t, c_t) dt + a(t, X_t, c_t) dW_t

together with a running reward rate f(t, x, c), a terminal reward g(x),
a horizon T, an initial state x0 and a closed control interval
[c_lo, c_hi].  All coefficient callables must be pure and numpy
broadcastable: they are evaluated on whole grid slices at once.
"""

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

Coefficient = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
TerminalReward = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ControlProblem:
    """Immutable bundle of problem data shared by every solver module.

    Parameters
    ----------
    drift, diffusion, running_reward : callables (t, x, c) -> array
        Coefficient functions.  ``diffusion`` must be nonnegative on the
        grid for every admissible control.
    terminal_reward : callable (x) -> array
    horizon : float, > 0
    initial_state : float, strictly inside any grid built for the problem
    c_lo, c_hi : floats, c_lo < c_hi
        Closed box constraint on the control.
    prefers_log_space : bool
        Hint consumed by ``make_grid`` when the caller does not specify
        the space-mesh coordinate (multiplicative dynamics resolve more
        evenly on a log mesh).
    """

    drift: Coefficient
    diffusion: Coefficient
    running_reward: Coefficient
    terminal_reward: TerminalReward
    horizon: float
    initial_state: float
    c_lo: float
    c_hi: float
    prefers_log_space: bool = False
    name: str = "custom"

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not self.c_lo < self.c_hi:
            raise ValueError(
                f"control bounds must satisfy c_lo < c_hi, got [{self.c_lo}, {self.c_hi}]"
            )

    @property
    def control_bounds(self) -> tuple[float, float]:
        return (self.c_lo, self.c_hi)

    def with_rewards(self, running_reward=None, terminal_reward=None) -> "ControlProblem":
        """Copy of the problem with rewards replaced (used by scaling tests)."""
        kwargs = {}
        if running_reward is not None:
            kwargs["running_reward"] = running_reward
        if terminal_reward is not None:
            kwargs["terminal_reward"] = terminal_reward
        return replace(self, **kwargs)


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and scheme knobs for the PDE solvers and the sweep.

    theta is the implicitness of the time stepping (1 = implicit Euler,
    the default, which is unconditionally positive; 1/2 = Crank-Nicolson).
    theta_damp blends the fresh control update with the previous one.
    delta_width_cells is the standard deviation, in mesh cells, of the
    mollified point mass used as the forward initial condition.
    """

    sweep_tol: float = 1e-6
    max_sweeps: int = 60
    theta_damp: float = 0.5
    theta: float = 1.0
    delta_width_cells: float = 2.0
    mass_tol: float = 1e-8
    stationarity_tol: float = 1e-6
    variation_tol: float = 1e-3

    def __post_init__(self):
        for name in ("sweep_tol", "mass_tol", "stationarity_tol", "variation_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")
        if not 0 < self.theta_damp <= 1:
            raise ValueError("theta_damp must lie in (0, 1]")
        if not 0.5 <= self.theta <= 1:
            raise ValueError("theta must lie in [1/2, 1]")
        if not self.delta_width_cells > 0:
            raise ValueError("delta_width_cells must be positive")


def make_merton_problem(
    mu: float,
    sigma: float,
    q: float,
    T: float,
    x0: float,
    c_lo: float = 0.0,
    c_hi: float = 10.0,
) -> ControlProblem:
    """Wealth-fraction investment problem with power utility.

    A single risky asset with drift ``mu`` and volatility ``sigma``
    (risk-free rate zero); the control is the fraction of wealth held in
    the asset, so the wealth process has coefficients

        b(t, x, c) = mu * c * x,      a(t, x, c) = sigma * c * x,

    no running reward, and terminal utility g(x) = x**q / q.

    Parameters
    ----------
    mu, sigma : asset drift and volatility, sigma > 0
    q : risk exponent, q < 1 and q != 0 (keeps g strictly concave and
        covered by the power-utility closed forms)
    T : horizon, x0 : initial wealth (> 0)
    c_lo, c_hi : control box, default [0, 10]

    Raises
    ------
    ValueError for sigma <= 0, x0 <= 0, q >= 1 (utility not concave) or
    q == 0 (log utility, outside the power family).
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if x0 <= 0:
        raise ValueError(f"x0 must be positive, got {x0}")
    if q >= 1:
        raise ValueError(f"risk exponent q must be < 1 for a concave utility, got {q}")
    if q == 0:
        raise ValueError("q = 0 (log utility) is not covered by the power-utility family")

    def drift(t, x, c):
        return mu * c * np.asarray(x)

    def diffusion(t, x, c):
        return sigma * np.abs(np.asarray(c)) * np.asarray(x)

    def running_reward(t, x, c):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(c)).shape)

    def terminal_reward(x):
        return np.asarray(x) ** q / q

    return ControlProblem(
        drift=drift,
        diffusion=diffusion,
        running_reward=running_reward,
        terminal_reward=terminal_reward,
        horizon=T,
        initial_state=x0,
        c_lo=c_lo,
        c_hi=c_hi,
        prefers_log_space=True,
        name="merton",
    )


# Built-in catalog: named problem builders the CLI can instantiate from a
# config file.  User problems register programmatically; no expression
# parsing happens anywhere.
_CATALOG: dict[str, Callable[..., ControlProblem]] = {"merton": make_merton_problem}


def register_problem(name: str, builder: Callable[..., ControlProblem]) -> None:
    """Add a named problem builder to the catalog (overwrites silently)."""
    _CATALOG[name] = builder


def get_problem(name: str, **parameters) -> ControlProblem:
    """Instantiate a catalog problem by name with keyword parameters."""
    try:
        builder = _CATALOG[name]
    except KeyError:
        known = ", ".join(sorted(_CATALOG))
        raise KeyError(f"unknown problem {name!r}; catalog has: {known}") from None
    return builder(**parameters)
