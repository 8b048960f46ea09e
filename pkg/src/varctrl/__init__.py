"""varctrl: optimal Markov controls for 1-D finite-horizon stochastic
control problems, computed by a forward-backward sweep over the coupled
optimality system (forward density equation, backward multiplier
equation, pointwise control stationarity) and verified against closed
forms and path simulation.

Submodules are loaded lazily so that the command-line front end can
configure threading caps before the numeric stack is imported.
"""

__version__ = "0.1.0"

_EXPORTS = {
    "ControlProblem": "problems",
    "SolverConfig": "problems",
    "make_merton_problem": "problems",
    "register_problem": "problems",
    "get_problem": "problems",
    "SpaceTimeGrid": "grids",
    "GridFunction": "grids",
    "make_grid": "grids",
    "constant_control": "grids",
    "TridiagonalOperator": "operators",
    "SolverError": "operators",
    "assemble_generator": "operators",
    "assemble_adjoint": "operators",
    "initial_delta": "forward",
    "KFEResult": "forward",
    "solve_kfe": "forward",
    "solve_adjoint": "backward",
    "HamiltonianSample": "controls",
    "hamiltonian": "controls",
    "lambda_derivatives": "controls",
    "update_control_slice": "controls",
    "stationarity_residual": "controls",
    "SweepRecord": "sweep",
    "SweepResult": "sweep",
    "forward_backward_sweep": "sweep",
    "evaluate_objective": "sweep",
    "MertonClosedForm": "verification",
    "merton_closed_form": "verification",
    "MCEstimate": "verification",
    "monte_carlo_objective": "verification",
    "discrete_lagrangian": "verification",
    "VariationReport": "verification",
    "check_first_variations": "verification",
    "central_half": "verification",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    if name in _EXPORTS:
        import importlib

        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        value = getattr(module, name)
        globals()[name] = value
        return value
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return __all__
