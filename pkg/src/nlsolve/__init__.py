"""Composable nonlinear algebraic solvers on structured grids.

Solvers are described by trees: an outer iteration (Newton-Krylov,
Anderson mixing, L-BFGS, nonlinear CG, Richardson), optionally wrapped
around nonlinear preconditioners (multigrid FAS cycles, additive Schwarz
sweeps, composites of other solvers) on the left or right.  Trees are
built programmatically from SolverNode values or parsed from a compact
text form:

    from nlsolve import parse_spec, build_solver, make_problem
    from nlsolve.problems import PLaplacianParams, plap_initial_guess

    params = PLaplacianParams(nx=65, ny=65, p=5.0)
    problem = make_problem("plaplacian", params)
    solver = build_solver(parse_spec("newton(lpc=asm,ls=bt,rtol=1e-8)"))
    result = solver.solve(problem, plap_initial_guess(params))
"""

from .config import (LinearPCSpec, SolverNode, default_sub_solver,
                     resolve_convergence, resolve_linesearch, to_string)
from .core import (ConfigurationError, ConvergedReason, ConvergenceParams,
                   GridLayout, NonlinearProblem, SingularMatrixError,
                   SolveResult, SolveStats, check_convergence, matrix_problem)
from .dsl import ParseError, parse_spec
from .experiment import (ExperimentRecord, build_problem, emit_results,
                         record_from_json, run_experiment)
from .linesearch import LineSearchConfig, LineSearchOutcome, run_linesearch
from .presets import PRESETS, Preset, get_preset
from .solvers import build_solver
from .problems import (CavityParams, PLaplacianParams, initial_guess,
                       make_cavity, make_plaplacian, make_problem)

__version__ = "0.1.0"

__all__ = [
    "CavityParams", "ConfigurationError", "ConvergedReason",
    "ConvergenceParams", "ExperimentRecord", "GridLayout", "LineSearchConfig",
    "LineSearchOutcome", "LinearPCSpec", "NonlinearProblem", "PLaplacianParams",
    "PRESETS", "ParseError", "Preset", "SingularMatrixError", "SolveResult",
    "SolveStats", "SolverNode", "build_problem", "build_solver",
    "check_convergence", "default_sub_solver", "emit_results", "get_preset",
    "initial_guess", "make_cavity", "make_plaplacian", "make_problem",
    "matrix_problem", "parse_spec", "record_from_json", "resolve_convergence",
    "resolve_linesearch", "run_experiment", "run_linesearch", "to_string",
    "__version__",
]
