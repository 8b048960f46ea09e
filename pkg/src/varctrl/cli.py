"""Command-line entry point.

Subcommands
-----------
solve   run the forward-backward sweep, write c_star.csv, lambda.csv,
        density.csv and report.json to the output directory
verify  solve, then compare against the problem's closed forms and the
        first-variation residuals; exit 3 if any residual exceeds its
        tolerance
mc      solve, then estimate the objective by path simulation and print
        the estimate with its standard error

All three read a JSON config (see demos/merton.json) with sections
problem{name, parameters}, grid{n_t, n_x, x_min, x_max, log_space,
boundary}, solver{tolerances, damping, theta, max_sweeps},
outputs{directory}, and optional verify{...} tolerances.

Exit codes: 0 success, 1 solver error, 2 config error, 3 verification
failure.  Identical config and seed produce byte-identical outputs.
The environment variable VARCTRL_THREADS caps the linear-algebra worker
count (0 or unset = automatic); it must be honored before the numeric
stack loads, which is why this module defers those imports.
"""

import argparse
import json
import os
import sys

_threads = os.environ.get("VARCTRL_THREADS", "")
if _threads.strip():
    if _threads.strip().isdigit() and _threads.strip() != "0":
        for _var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ.setdefault(_var, _threads.strip())
    elif not _threads.strip().isdigit():
        print(f"varctrl: ignoring non-integer VARCTRL_THREADS={_threads!r}", file=sys.stderr)


class ConfigError(Exception):
    pass


_VERIFY_DEFAULTS = {
    "c_star_tol": 0.1,
    "lambda_tol": 0.01,
    "density_tol": 0.02,
    "objective_tol": 0.01,
    "variation_tol": 1e-3,
    "n_random": 20,
    "seed": 0,
}


def _load_config(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    for section in ("problem", "grid"):
        if section not in cfg:
            raise ConfigError(f"config is missing the {section!r} section")
    return cfg


def _build(cfg: dict):
    """Instantiate (problem, grid, solver config) from a parsed config."""
    from . import grids, problems

    prob_cfg = cfg["problem"]
    try:
        problem = problems.get_problem(prob_cfg["name"], **prob_cfg.get("parameters", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad problem section: {exc}") from exc

    grid_cfg = cfg["grid"]
    try:
        grid = grids.make_grid(
            problem,
            n_t=int(grid_cfg["n_t"]),
            n_x=int(grid_cfg["n_x"]),
            x_min=float(grid_cfg["x_min"]),
            x_max=float(grid_cfg["x_max"]),
            log_space=grid_cfg.get("log_space"),
            boundary=grid_cfg.get("boundary", "reflecting"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid section: {exc}") from exc

    try:
        config = problems.SolverConfig(**cfg.get("solver", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad solver section: {exc}") from exc
    return problem, grid, config


def _initial_control(cfg: dict, problem, grid):
    from .grids import constant_control

    if "initial_control" in cfg:
        value = float(cfg["initial_control"])
        if not (problem.c_lo <= value <= problem.c_hi):
            raise ConfigError(
                f"initial_control {value} outside [{problem.c_lo}, {problem.c_hi}]"
            )
        return constant_control(grid, value)
    return None


def _write_csv(path: str, grid, values) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,x,value\n")
        t = grid.t_nodes
        x = grid.x_nodes
        for n in range(grid.n_t):
            row = values[n]
            for j in range(grid.n_x):
                fh.write("%.17g,%.17g,%.17g\n" % (t[n], x[j], row[j]))


def _write_report(path: str, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _base_report(cfg: dict, grid, config, result) -> dict:
    return {
        "problem": cfg["problem"],
        "grid": {
            "n_t": grid.n_t,
            "n_x": grid.n_x,
            "x_min": grid.x_min,
            "x_max": grid.x_max,
            "log_space": grid.log_space,
            "boundary": grid.boundary,
        },
        "solver": {
            "sweep_tol": config.sweep_tol,
            "max_sweeps": config.max_sweeps,
            "theta_damp": config.theta_damp,
            "theta": config.theta,
            "delta_width_cells": config.delta_width_cells,
            "mass_tol": config.mass_tol,
            "stationarity_tol": config.stationarity_tol,
        },
        "converged": result.converged,
        "iterations": result.iterations,
        "objective": result.objective,
        "warnings": list(result.warnings),
    }


def _run_sweep(cfg: dict):
    from .sweep import forward_backward_sweep

    problem, grid, config = _build(cfg)
    c_init = _initial_control(cfg, problem, grid)
    result = forward_backward_sweep(problem, grid, config, c_init=c_init)
    return problem, grid, config, result


def _out_dir(cfg: dict, override: str | None) -> str:
    directory = override or cfg.get("outputs", {}).get("directory", ".")
    os.makedirs(directory, exist_ok=True)
    return directory


def _cmd_solve(cfg: dict, out_override: str | None) -> int:
    problem, grid, config, result = _run_sweep(cfg)
    out = _out_dir(cfg, out_override)
    _write_csv(os.path.join(out, "c_star.csv"), grid, result.control.values)
    _write_csv(os.path.join(out, "lambda.csv"), grid, result.multiplier.values)
    _write_csv(os.path.join(out, "density.csv"), grid, result.density.values)
    _write_report(os.path.join(out, "report.json"), _base_report(cfg, grid, config, result))
    print(f"solve: J = {result.objective:.12g}, converged = {result.converged}, "
          f"iterations = {result.iterations}, outputs in {out}")
    return 0


def _cmd_verify(cfg: dict, out_override: str | None) -> int:
    import numpy as np

    from .verification import central_half, check_first_variations, merton_closed_form

    if cfg["problem"].get("name") != "merton":
        raise ConfigError("verify requires a problem with closed forms (catalog name 'merton')")
    problem, grid, config, result = _run_sweep(cfg)
    closed = merton_closed_form(**cfg["problem"].get("parameters", {}))

    tols = dict(_VERIFY_DEFAULTS)
    tols.update(cfg.get("verify", {}))

    core = central_half(grid.n_x)
    x = grid.x_nodes
    t = grid.t_nodes

    c_err = float(np.max(np.abs(result.control.values[:, core] - closed.c_star)))

    lam_exact = closed.multiplier(t[:, None], x[None, :])
    lam_rel = np.abs(result.multiplier.values - lam_exact) / np.abs(lam_exact)
    lam_err = float(np.max(lam_rel[:, core]))

    width = config.delta_width_cells * grid.d_xi
    oracle = closed.density(problem.horizon, x, extra_log_var=width * width)
    w = grid.quad_weights * grid.jacobian
    density_err = float(np.dot(w, np.abs(result.density.values[-1] - oracle)))

    j_err = abs(result.objective - closed.J_star) / abs(closed.J_star)

    report_vars = check_first_variations(
        problem, grid, result, config,
        n_random=int(tols["n_random"]), seed=int(tols["seed"]),
    )

    failures = []
    if c_err > tols["c_star_tol"]:
        failures.append("c_star_error")
    if lam_err > tols["lambda_tol"]:
        failures.append("lambda_error")
    if density_err > tols["density_tol"]:
        failures.append("density_L1_error")
    if j_err > tols["objective_tol"]:
        failures.append("J_error")
    if max(report_vars.residuals) > tols["variation_tol"]:
        failures.append("variation_residuals")
    if not result.converged:
        failures.append("converged")

    report = _base_report(cfg, grid, config, result)
    report.update(
        {
            "c_star_error": c_err,
            "lambda_error": lam_err,
            "density_L1_error": density_err,
            "J_error": j_err,
            "variation_residuals": list(report_vars.residuals),
            "closed_form": {
                "c_star": closed.c_star,
                "J_star": closed.J_star,
                "Sigma": closed.Sigma,
                "m": closed.m,
            },
            "tolerances": tols,
            "failures": failures,
        }
    )
    out = _out_dir(cfg, out_override)
    _write_report(os.path.join(out, "report.json"), report)
    status = "PASS" if not failures else f"FAIL ({', '.join(failures)})"
    print(
        f"verify: {status}  c_star_error={c_err:.3e} lambda_error={lam_err:.3e} "
        f"density_L1_error={density_err:.3e} J_error={j_err:.3e} "
        f"max_variation={max(report_vars.residuals):.3e}"
    )
    return 0 if not failures else 3


def _cmd_mc(cfg: dict, paths: int, steps: int, seed: int) -> int:
    from .verification import monte_carlo_objective

    problem, grid, config, result = _run_sweep(cfg)
    est = monte_carlo_objective(problem, result.control, n_paths=paths, n_steps=steps, seed=seed)
    print(
        f"mc: J = {est.mean:.12g} +/- {est.std_error:.6g} "
        f"(paths={est.n_paths}, steps={est.n_steps}, seed={est.seed}, "
        f"exploded={est.n_exploded}); grid J = {result.objective:.12g}"
    )
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="varctrl",
        description="Variational solver for 1-D finite-horizon stochastic control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run the sweep and write CSV/JSON outputs")
    p_verify = sub.add_parser("verify", help="run the sweep and check closed-form residuals")
    p_mc = sub.add_parser("mc", help="estimate the objective by path simulation")
    for p in (p_solve, p_verify, p_mc):
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
    for p in (p_solve, p_verify):
        p.add_argument("--out", default=None, help="output directory (overrides config)")
    p_mc.add_argument("--paths", type=int, default=100_000, help="number of simulated paths")
    p_mc.add_argument("--steps", type=int, default=200, help="time steps per path")
    p_mc.add_argument("--seed", type=int, default=0, help="random seed")

    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        if args.command == "solve":
            return _cmd_solve(cfg, args.out)
        if args.command == "verify":
            return _cmd_verify(cfg, args.out)
        return _cmd_mc(cfg, args.paths, args.steps, args.seed)
    except ConfigError as exc:
        print(f"varctrl: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # solver failures
        print(f"varctrl: solver error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
