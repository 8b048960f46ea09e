"""Pointwise control stationarity: at each node, choose the control
maximizing the Hamiltonian

    H(c) = f(t, y, c) + b(t, y, c) * lam_y + 0.5 * a(t, y, c)^2 * lam_yy

built from the first and second state-derivatives of the multiplier.
A first-order condition alone would accept minimizers, so the update
maximizes: golden-section to bracket, then a Newton polish on dH/dc,
clipped to the admissible box.  When the Hamiltonian is flat to
round-off the smallest admissible control is returned, which keeps the
output deterministic.  Node updates are independent and vectorized
across one space slice.
"""

from dataclasses import dataclass

import numpy as np

from .grids import SpaceTimeGrid
from .problems import ControlProblem

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0  # golden ratio shrink factor


@dataclass(frozen=True)
class HamiltonianSample:
    """Multiplier derivatives at one space-time point (or a whole slice:
    the fields broadcast)."""

    t: float
    y: np.ndarray
    dlam: np.ndarray
    d2lam: np.ndarray

    def __post_init__(self):
        for name in ("y", "dlam", "d2lam"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite {name} in Hamiltonian sample")
            object.__setattr__(self, name, arr)


def hamiltonian(problem: ControlProblem, sample: HamiltonianSample, c) -> np.ndarray:
    """Evaluate H at control value(s) c (broadcast over the sample)."""
    c = np.asarray(c, dtype=float)
    b = problem.drift(sample.t, sample.y, c)
    a = problem.diffusion(sample.t, sample.y, c)
    f = problem.running_reward(sample.t, sample.y, c)
    return f + b * sample.dlam + 0.5 * a * a * sample.d2lam


def lambda_derivatives(grid: SpaceTimeGrid, lam_slice: np.ndarray):
    """Discrete first and second state-derivatives of one multiplier slice.

    Central differences in the uniform coordinate, mapped to physical
    x-derivatives on log grids; boundary nodes use the even-ghost forms
    consistent with the reflecting wall rows.
    """
    lam = np.asarray(lam_slice, dtype=float)
    h = grid.d_xi
    n = lam.size

    d1 = np.empty(n)
    d2 = np.empty(n)
    d1[1:-1] = (lam[2:] - lam[:-2]) / (2.0 * h)
    d2[1:-1] = (lam[2:] - 2.0 * lam[1:-1] + lam[:-2]) / (h * h)
    d1[0] = (lam[1] - lam[0]) / h
    d1[-1] = (lam[-1] - lam[-2]) / h
    d2[0] = 2.0 * (lam[1] - lam[0]) / (h * h)
    d2[-1] = 2.0 * (lam[-2] - lam[-1]) / (h * h)

    if grid.log_space:
        x = grid.x_nodes
        return d1 / x, (d2 - d1) / (x * x)
    return d1, d2


def _hamiltonian_rows(problem, grid, t, dlam, d2lam):
    x = grid.x_nodes

    def H(c):
        c = np.asarray(c, dtype=float)
        b = problem.drift(t, x, c)
        a = problem.diffusion(t, x, c)
        f = problem.running_reward(t, x, c)
        val = f + b * dlam + 0.5 * a * a * d2lam
        return np.broadcast_to(np.asarray(val, dtype=float), x.shape)

    return H


def update_control_slice(
    problem: ControlProblem,
    grid: SpaceTimeGrid,
    t: float,
    lam_slice: np.ndarray,
    config,
) -> np.ndarray:
    """Per-node argmax of the Hamiltonian over [c_lo, c_hi] for one slice.

    Golden-section (vectorized across the slice) narrows the bracket,
    a safeguarded Newton step on dH/dc polishes interior maximizers, and
    the box endpoints are always considered; ties at round-off resolve
    to the smaller control.
    """
    dlam, d2lam = lambda_derivatives(grid, lam_slice)
    H = _hamiltonian_rows(problem, grid, t, dlam, d2lam)
    lo, hi = problem.c_lo, problem.c_hi
    span = hi - lo
    n = grid.n_x

    # golden-section: one new H evaluation per iteration after the first
    a = np.full(n, lo)
    b = np.full(n, hi)
    c1 = b - _INVPHI * (b - a)
    c2 = a + _INVPHI * (b - a)
    f1 = H(c1)
    f2 = H(c2)
    if not (np.all(np.isfinite(f1)) and np.all(np.isfinite(f2))):
        bad = int(np.argmax(~(np.isfinite(f1) & np.isfinite(f2))))
        raise ValueError(
            f"non-finite Hamiltonian at t={t}, x={grid.x_nodes[bad]} (node {bad})"
        )
    n_iter = max(10, int(np.ceil(np.log(1e-9) / np.log(_INVPHI))))
    for _ in range(n_iter):
        move_right = f1 < f2
        a = np.where(move_right, c1, a)
        b = np.where(move_right, b, c2)
        c1_new = np.where(move_right, c2, b - _INVPHI * (b - a))
        c2_new = np.where(move_right, a + _INVPHI * (b - a), c1)
        f_new = H(np.where(move_right, c2_new, c1_new))
        f1, f2 = np.where(move_right, f2, f_new), np.where(move_right, f_new, f1)
        c1, c2 = c1_new, c2_new
    c_star = np.where(f1 >= f2, c1, c2)
    h_star = np.where(f1 >= f2, f1, f2)

    # Newton polish on dH/dc (finite differences in c); the stencil must
    # stay inside the box, so nodes within one step of a bound are left
    # to the endpoint comparison below
    hc = max(1e-7 * span, 1e-12)
    inside = (c_star > lo + hc) & (c_star < hi - hc)
    for _ in range(2):
        g_plus = H(np.minimum(c_star + hc, hi))
        g_minus = H(np.maximum(c_star - hc, lo))
        grad = (g_plus - g_minus) / (2.0 * hc)
        curv = (g_plus - 2.0 * h_star + g_minus) / (hc * hc)
        polish = inside & (curv < 0)
        step = np.where(polish, -grad / np.where(polish, curv, 1.0), 0.0)
        cand = np.clip(c_star + step, lo, hi)
        h_cand = H(cand)
        better = h_cand >= h_star
        c_star = np.where(better, cand, c_star)
        h_star = np.where(better, h_cand, h_star)

    # endpoints compete; ties at round-off go to the smaller control
    h_lo = H(np.full(n, lo))
    h_hi = H(np.full(n, hi))
    if not (np.all(np.isfinite(h_lo)) and np.all(np.isfinite(h_hi))):
        bad = int(np.argmax(~(np.isfinite(h_lo) & np.isfinite(h_hi))))
        raise ValueError(
            f"non-finite Hamiltonian at t={t}, x={grid.x_nodes[bad]} (node {bad})"
        )
    scale = np.maximum.reduce([np.abs(h_star), np.abs(h_lo), np.abs(h_hi), np.ones(n)])
    tol = 1e-13 * scale
    c_out = c_star.copy()
    h_out = h_star.copy()
    take_hi = h_hi > h_out + tol
    c_out = np.where(take_hi, hi, c_out)
    h_out = np.where(take_hi, h_hi, h_out)
    take_lo = h_lo >= h_out - tol
    c_out = np.where(take_lo, lo, c_out)
    return np.clip(c_out, lo, hi)


def stationarity_residual(
    problem: ControlProblem,
    grid: SpaceTimeGrid,
    t: float,
    lam_slice: np.ndarray,
    c_slice: np.ndarray,
) -> float:
    """Largest |dH/dc|, scaled, over nodes where the control is strictly
    interior; zero when every node sits on the box boundary.

    The scale is the Hamiltonian magnitude per unit control span, so the
    residual is comparable across problems.
    """
    dlam, d2lam = lambda_derivatives(grid, lam_slice)
    H = _hamiltonian_rows(problem, grid, t, dlam, d2lam)
    lo, hi = problem.c_lo, problem.c_hi
    span = hi - lo
    c = np.asarray(c_slice, dtype=float)

    edge = 1e-9 * span
    interior = (c > lo + edge) & (c < hi - edge)
    if not np.any(interior):
        return 0.0
    hc = max(1e-7 * span, 1e-12)
    grad = (H(np.minimum(c + hc, hi)) - H(np.maximum(c - hc, lo))) / (2.0 * hc)
    scale = np.maximum(
        np.maximum(np.abs(H(c)), np.abs(H(np.full_like(c, lo)))), np.abs(H(np.full_like(c, hi)))
    )
    scale = np.maximum(scale / span, 1e-30)
    rel = np.abs(grad) / scale
    return float(np.max(rel[interior]))
