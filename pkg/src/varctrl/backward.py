"""Backward multiplier equation: for a fixed Markov control, solve

    0 = f(t, y, c) + (d/dt + A_c) lam(t, y),      lam(T, y) = g(y),

marching from the terminal slice with the generator operator and the
running reward as source.  The scheme mirrors the forward stepper so
that the pair is an exact critical point of the discrete Lagrangian:

    (I - theta dt A_n) lam_n = (I + (1-theta) dt A_{n+1}) lam_{n+1} + dt f_n,

except for the terminal step, which is fully implicit for any theta
(that is the form the discrete first variation produces).  With f == 0
the monotone matrices give a discrete maximum principle: every slice
stays within [min g, max g].
"""

import numpy as np

from .grids import GridFunction, SpaceTimeGrid
from .operators import assemble_generator
from .problems import ControlProblem, SolverConfig


def solve_adjoint(
    problem: ControlProblem,
    grid: SpaceTimeGrid,
    control: GridFunction,
    config: SolverConfig,
) -> GridFunction:
    """Multiplier field for ``control``, all time slices.

    The terminal slice is g sampled on the nodes, bit-for-bit.  Solving
    with rewards (alpha f, alpha g) yields alpha times the result, to
    round-off; the control optimizer's argmax invariance rests on that
    linearity.
    """
    c = control.values
    lo, hi = problem.c_lo, problem.c_hi
    if np.min(c) < lo - 1e-12 or np.max(c) > hi + 1e-12:
        raise ValueError("control leaves the admissible box")

    theta = config.theta
    dt = grid.dt
    t = grid.t_nodes
    x = grid.x_nodes
    N = grid.n_t - 1

    lam = np.empty((grid.n_t, grid.n_x))
    lam[N] = np.asarray(problem.terminal_reward(x), dtype=float)

    gen_next = None  # generator at level n+1, reused across steps
    for n in range(N - 1, -1, -1):
        gen = assemble_generator(problem, grid, t[n], c[n])
        f_n = np.broadcast_to(
            np.asarray(problem.running_reward(t[n], x, c[n]), dtype=float), x.shape
        )
        if theta == 1.0 or n == N - 1:
            rhs = lam[n + 1] + dt * f_n
        else:
            rhs = lam[n + 1] + (1.0 - theta) * dt * gen_next.apply(lam[n + 1]) + dt * f_n
        lam[n] = gen.solve_shifted(theta * dt, rhs, time_index=n)
        gen_next = gen

    return GridFunction(lam, grid)
