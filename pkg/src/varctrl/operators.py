"""Tridiagonal discretizations of the generator and its adjoint.

The generator of the controlled diffusion acts on functions of the state,

    A phi = b(t, x, c) phi_x + 0.5 * a(t, x, c)^2 phi_xx,

and its formal adjoint propagates densities forward.  On a log grid the
operator is re-expressed in the uniform coordinate xi = log x, where it
has drift b/x - a^2/(2 x^2) and diffusion a^2/(2 x^2); the adjoint then
acts on densities taken with respect to xi.

Discretization contract, on which the whole variational structure rests:

* second-order term: central differences; first-order term: central
  differences, switching to first-order upwind at nodes where the cell
  Peclet number |b_xi| * dxi / (0.5 * a_xi^2) exceeds 2.  Off-diagonal
  entries are then nonnegative, giving a monotone scheme (discrete
  maximum principle backward, positivity forward).
* every generator row sums to zero (constants are annihilated), boundary
  rows included under the reflecting policy.
* the adjoint is the exact transpose of the generator in the discrete
  trapezoid inner product <u, v> = sum_j w_j u_j v_j, i.e. the matrix
  W^-1 A^T W with W = diag(w).  Duality <A phi, psi> = <phi, A^T psi>
  therefore holds to round-off for all vectors, and the trapezoid mass
  of a density is conserved exactly by the forward flow (w^T A_adj = 0
  whenever A annihilates constants).
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .grids import SpaceTimeGrid
from .problems import ControlProblem


class SolverError(RuntimeError):
    """Raised when a linear solve or a pointwise optimization fails."""


@dataclass(frozen=True)
class TridiagonalOperator:
    """Tridiagonal matrix stored as three diagonals of length n_x.

    lower[j] is entry (j, j-1) with lower[0] = 0; upper[j] is entry
    (j, j+1) with upper[-1] = 0.  Application is O(n_x).
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        for name in ("lower", "diag", "upper"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        n = self.diag.size
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("diagonal length mismatch")

    @property
    def n(self) -> int:
        return self.diag.size

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = self.diag * v
        out[:-1] += self.upper[:-1] * v[1:]
        out[1:] += self.lower[1:] * v[:-1]
        return out

    def solve_shifted(self, alpha: float, rhs: np.ndarray, time_index: int | None = None) -> np.ndarray:
        """Solve (I - alpha * A) x = rhs.

        Raises SolverError (tagged with the time index when provided) if
        the shifted system is singular.
        """
        n = self.n
        ab = np.zeros((3, n))
        ab[0, 1:] = -alpha * self.upper[:-1]
        ab[1, :] = 1.0 - alpha * self.diag
        ab[2, :-1] = -alpha * self.lower[1:]
        try:
            x = solve_banded((1, 1), ab, rhs, check_finite=False)
        except np.linalg.LinAlgError as exc:
            where = "" if time_index is None else f" at time index {time_index}"
            raise SolverError(f"singular tridiagonal system{where}: {exc}") from exc
        if not np.all(np.isfinite(x)):
            where = "" if time_index is None else f" at time index {time_index}"
            raise SolverError(f"tridiagonal solve produced non-finite values{where}")
        return x

    def to_dense(self) -> np.ndarray:
        m = np.diag(self.diag)
        m += np.diag(self.upper[:-1], k=1)
        m += np.diag(self.lower[1:], k=-1)
        return m

    def row_sums(self) -> np.ndarray:
        out = self.diag.copy()
        out[:-1] += self.upper[:-1]
        out[1:] += self.lower[1:]
        return out

    def weighted_column_sums(self, weights: np.ndarray) -> np.ndarray:
        """w^T A, the mass-functional derivative along the flow."""
        w = np.asarray(weights, dtype=float)
        out = w * self.diag
        out[1:] += w[:-1] * self.upper[:-1]
        out[:-1] += w[1:] * self.lower[1:]
        return out


def _xi_coefficients(problem: ControlProblem, grid: SpaceTimeGrid, t: float, c_slice: np.ndarray):
    """Drift and half-squared-diffusion in the uniform coordinate."""
    x = grid.x_nodes
    c = np.asarray(c_slice, dtype=float)
    b = np.asarray(problem.drift(t, x, c), dtype=float)
    a = np.asarray(problem.diffusion(t, x, c), dtype=float)
    b = np.broadcast_to(b, x.shape).astype(float)
    a = np.broadcast_to(a, x.shape).astype(float)
    if np.min(a) < 0:
        raise ValueError("diffusion coefficient must be nonnegative on the grid")
    if grid.log_space:
        half_a2 = a * a / (2.0 * x * x)
        b_xi = b / x - half_a2
    else:
        half_a2 = 0.5 * a * a
        b_xi = b
    return b_xi, half_a2


def assemble_generator(
    problem: ControlProblem, grid: SpaceTimeGrid, t: float, c_slice: np.ndarray
) -> TridiagonalOperator:
    """Generator matrix at one time level for one control slice.

    Interior rows are central in the second derivative and central or
    upwinded in the first (cell Peclet > 2 engages the upwind switch),
    so off-diagonals are nonnegative and interior rows sum to zero.

    Reflecting boundary rows impose a zero-flux wall: the diffusion part
    uses the even-ghost one-sided second difference and only the inward
    drift component is kept.  Absorbing boundary rows are zero (the
    boundary value is frozen by the time steppers).
    """
    b_xi, half_a2 = _xi_coefficients(problem, grid, t, c_slice)
    h = grid.d_xi
    n = grid.n_x

    lower = np.zeros(n)
    diag = np.zeros(n)
    upper = np.zeros(n)

    diff = half_a2 / (h * h)
    # upwind where |b| h > a^2 (cell Peclet > 2), which is exactly the
    # threshold at which a central off-diagonal would turn negative
    central = np.abs(b_xi) * h <= 2.0 * half_a2
    adv = b_xi / (2.0 * h)
    lo = np.where(central, diff - adv, diff + np.maximum(-b_xi, 0.0) / h)
    up = np.where(central, diff + adv, diff + np.maximum(b_xi, 0.0) / h)

    lower[1:-1] = lo[1:-1]
    upper[1:-1] = up[1:-1]
    diag[1:-1] = -(lo[1:-1] + up[1:-1])

    if grid.boundary == "reflecting":
        upper[0] = 2.0 * diff[0] + max(b_xi[0], 0.0) / h
        diag[0] = -upper[0]
        lower[-1] = 2.0 * diff[-1] + max(-b_xi[-1], 0.0) / h
        diag[-1] = -lower[-1]
    # absorbing: boundary rows stay zero

    return TridiagonalOperator(lower, diag, upper)


def assemble_adjoint(
    problem: ControlProblem, grid: SpaceTimeGrid, t: float, c_slice: np.ndarray
) -> TridiagonalOperator:
    """Adjoint (density-side) matrix: the generator transposed in the
    trapezoid inner product, boundary rows adapted to the policy.

    With reflecting boundaries this is W^-1 A^T W for the full generator
    matrix A, so duality holds for all vectors and the trapezoid mass is
    conserved exactly.  With absorbing boundaries the generator is first
    restricted to the interior (boundary couplings dropped), which makes
    the interior mass decay monotonically.
    """
    gen = assemble_generator(problem, grid, t, c_slice)
    w = grid.quad_weights
    n = grid.n_x

    g_lower = gen.lower.copy()
    g_diag = gen.diag.copy()
    g_upper = gen.upper.copy()
    if grid.boundary == "absorbing":
        # drop couplings into the boundary columns (Dirichlet restriction)
        g_lower[1] = 0.0
        g_upper[-2] = 0.0

    lower = np.zeros(n)
    diag = g_diag.copy()
    upper = np.zeros(n)
    # (W^-1 A^T W)[j, j-1] = A[j-1, j] * w[j-1] / w[j], and symmetrically
    lower[1:] = g_upper[:-1] * w[:-1] / w[1:]
    upper[:-1] = g_lower[1:] * w[1:] / w[:-1]
    return TridiagonalOperator(lower, diag, upper)
