"""Uniform space-time meshes and fields sampled on them.

The space mesh is uniform in an internal coordinate xi, which is either
the state itself (linear grids) or its logarithm (log grids).  All
finite-difference operators act in xi; physical densities are stored
with respect to the state variable x and converted through the Jacobian
dx/dxi where needed.  Quadrature is trapezoid in xi, i.e.

    integral phi(x) p(x) dx  ~=  sum_j w_j * J_j * phi(x_j) * p(x_j)

with w the uniform-coordinate trapezoid weights and J_j = x_j on log
grids (1 on linear grids).
"""

from dataclasses import dataclass

import numpy as np

from .problems import ControlProblem

BOUNDARIES = ("reflecting", "absorbing")


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform mesh on [0, T] x [x_min, x_max].

    n_t and n_x count mesh *nodes* (so there are n_t - 1 time steps).
    With ``log_space`` the space nodes are uniform in log x, which
    requires x_min > 0.  ``boundary`` selects the truncation policy at
    x_min and x_max: "reflecting" (conserves density mass) or
    "absorbing" (mass decays monotonically).
    """

    n_t: int
    n_x: int
    x_min: float
    x_max: float
    horizon: float
    log_space: bool = False
    boundary: str = "reflecting"

    def __post_init__(self):
        if self.n_t < 2:
            raise ValueError(f"n_t must be >= 2, got {self.n_t}")
        if self.n_x < 3:
            raise ValueError(f"n_x must be >= 3, got {self.n_x}")
        if not self.x_min < self.x_max:
            raise ValueError(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if self.log_space and self.x_min <= 0:
            raise ValueError("log-space grids require x_min > 0")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    # Mesh geometry.  Node coordinates are recomputed from the defining
    # parameters, so they are reproducible bit-exactly.

    @property
    def dt(self) -> float:
        return self.horizon / (self.n_t - 1)

    @property
    def t_nodes(self) -> np.ndarray:
        t = np.linspace(0.0, self.horizon, self.n_t)
        t.flags.writeable = False
        return t

    @property
    def xi_min(self) -> float:
        return float(np.log(self.x_min)) if self.log_space else self.x_min

    @property
    def xi_max(self) -> float:
        return float(np.log(self.x_max)) if self.log_space else self.x_max

    @property
    def d_xi(self) -> float:
        return (self.xi_max - self.xi_min) / (self.n_x - 1)

    @property
    def xi_nodes(self) -> np.ndarray:
        xi = np.linspace(self.xi_min, self.xi_max, self.n_x)
        xi.flags.writeable = False
        return xi

    @property
    def x_nodes(self) -> np.ndarray:
        x = np.exp(self.xi_nodes) if self.log_space else self.xi_nodes.copy()
        x.flags.writeable = False
        return x

    @property
    def jacobian(self) -> np.ndarray:
        """dx/dxi at the nodes: x on log grids, ones on linear grids."""
        j = self.x_nodes.copy() if self.log_space else np.ones(self.n_x)
        j.flags.writeable = False
        return j

    @property
    def quad_weights(self) -> np.ndarray:
        """Trapezoid weights in the uniform coordinate."""
        w = np.full(self.n_x, self.d_xi)
        w[0] *= 0.5
        w[-1] *= 0.5
        w.flags.writeable = False
        return w

    def to_xi(self, x):
        return np.log(x) if self.log_space else np.asarray(x, dtype=float)

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """Discrete inner product of coordinate-space slices."""
        return float(np.dot(self.quad_weights, np.asarray(u) * np.asarray(v)))

    def integrate_x(self, values: np.ndarray) -> float:
        """Quadrature of a function of the state: integral values dx."""
        return float(np.dot(self.quad_weights * self.jacobian, values))

    def mass(self, density_slice: np.ndarray) -> float:
        """Total mass of one density slice (density taken w.r.t. x)."""
        return self.integrate_x(density_slice)

    def slice_mean(self, density_slice: np.ndarray) -> float:
        """First moment of one density slice."""
        return float(np.dot(self.quad_weights * self.jacobian * self.x_nodes, density_slice))


def make_grid(
    problem: ControlProblem,
    n_t: int,
    n_x: int,
    x_min: float,
    x_max: float,
    log_space: bool | None = None,
    boundary: str = "reflecting",
) -> SpaceTimeGrid:
    """Build the mesh for a problem, validating the initial state.

    ``log_space=None`` defers to the problem's preference (multiplicative
    problems default to a log mesh).
    """
    if log_space is None:
        log_space = problem.prefers_log_space
    grid = SpaceTimeGrid(
        n_t=n_t,
        n_x=n_x,
        x_min=x_min,
        x_max=x_max,
        horizon=problem.horizon,
        log_space=log_space,
        boundary=boundary,
    )
    x0 = problem.initial_state
    if not (x_min < x0 < x_max):
        raise ValueError(
            f"initial state {x0} must lie strictly inside ({x_min}, {x_max})"
        )
    return grid


@dataclass(frozen=True)
class GridFunction:
    """Scalar field sampled on the full space-time mesh.

    ``values`` has shape (n_t, n_x).  Density-flagged instances hold a
    probability density with respect to x and must be nonnegative with
    unit mass per time slice (up to ``mass_tol``); plain instances hold
    arbitrary finite fields (multipliers, controls).
    """

    values: np.ndarray
    grid: SpaceTimeGrid
    is_density: bool = False

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.shape != (self.grid.n_t, self.grid.n_x):
            raise ValueError(
                f"values shape {values.shape} does not match grid "
                f"({self.grid.n_t}, {self.grid.n_x})"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function contains non-finite entries")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def slice_at(self, n: int) -> np.ndarray:
        return self.values[n]

    def masses(self) -> np.ndarray:
        """Per-slice mass (meaningful for density-flagged functions)."""
        w = self.grid.quad_weights * self.grid.jacobian
        return self.values @ w

    def validate_density(self, mass_tol: float) -> None:
        """Enforce the density invariants; raises on violation."""
        if np.min(self.values) < -1e-12:
            raise ValueError(f"density has negative entries (min {np.min(self.values):.3e})")
        drift = np.max(np.abs(self.masses() - 1.0))
        if self.grid.boundary == "reflecting" and drift > mass_tol:
            raise ValueError(f"density mass deviates from 1 by {drift:.3e} > {mass_tol:.1e}")


def constant_control(grid: SpaceTimeGrid, value: float) -> GridFunction:
    """Control field equal to ``value`` everywhere."""
    return GridFunction(np.full((grid.n_t, grid.n_x), float(value)), grid)
