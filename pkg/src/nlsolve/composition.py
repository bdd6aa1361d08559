"""Solver composition: additive and multiplicative combination of two or
more inner solvers, usable at any nesting depth.

Additive composition runs every child from the same point and combines the
candidate steps d_k = M_k(r, x) - x with weights chosen by a least-squares
fit on the children's residuals (fixed weights are available as an option).
Multiplicative composition chains the children, each starting from the
previous one's output.  Left and right preconditioning are the remaining two
composition forms; they live on the solver nodes themselves (`lp=` / `rp=`)
and are implemented by the solver drivers.
"""

from __future__ import annotations

import numpy as np

from . import linalg
from .config import SolverNode
from .core import ConfigurationError, ConvergedReason
from .solvers import (LeftPreconditionedProblem, NonlinearSolver,
                      _StepFailure, build_solver, left_precond_residual)


def _sweep_multiplicative(problem, x, children, stats):
    cur = x
    for child in children:
        nxt, ok = child.apply(problem, cur, stats)
        stats.npc_applies += 1
        if not ok or not np.all(np.isfinite(nxt)):
            raise _StepFailure(ConvergedReason.DIVERGED_INNER, x_last=cur)
        cur = nxt
    return cur


def _combine_additive(problem, x, r, children, stats, fixed_weights):
    outs = []
    for child in children:
        xk, ok = child.apply(problem, x, stats)
        stats.npc_applies += 1
        ok = ok and bool(np.all(np.isfinite(xk)))
        outs.append((xk, ok))
    if not any(ok for _, ok in outs):
        raise _StepFailure(ConvergedReason.DIVERGED_INNER)

    if fixed_weights is not None:
        x_new = x.copy()
        for w, (xk, ok) in zip(fixed_weights, outs):
            if ok:   # a failed child contributes no step
                x_new += w * (xk - x)
        return x_new

    # least-squares weights on the re-evaluated child residuals
    good = [xk for xk, ok in outs if ok]
    cols = [problem.residual(xk, stats) - r for xk in good]
    w, _ = linalg.least_squares_minnorm(cols, -r)
    x_new = x.copy()
    for wk, xk in zip(w, good):
        x_new += wk * (xk - x)
    return x_new


class CompositeSolver(NonlinearSolver):
    kind = "composite"

    def __init__(self, node, role="top"):
        super().__init__(node, role)
        self.mode = node.params.get("type", "additive")
        self.children = [build_solver(c, role="inner") for c in node.children]
        w = node.params.get("weights")
        if w is not None:
            w = np.asarray(w, dtype=float)
            if w.shape != (len(self.children),):
                raise ConfigurationError(
                    "fixed weights length must match the number of children")
        self.fixed_weights = w

    def _step(self, problem, x, r, rnorm, stats):
        if self.mode == "multiplicative":
            return _sweep_multiplicative(problem, x, self.children, stats), None
        return _combine_additive(problem, x, r, self.children, stats,
                                 self.fixed_weights), None


def additive_step(problem, x, children, stats, weights=None) -> np.ndarray:
    """One additive combination of already-built child solvers from x."""
    x = np.array(x, dtype=float)
    r = problem.residual(x, stats)
    w = None if weights is None else np.asarray(weights, dtype=float)
    return _combine_additive(problem, x, r, children, stats, w)


def multiplicative_step(problem, x, children, stats) -> np.ndarray:
    """One multiplicative sweep of already-built child solvers from x."""
    return _sweep_multiplicative(problem, np.array(x, dtype=float), children,
                                 stats)


def right_precond_wrap(outer: SolverNode, inner: SolverNode) -> SolverNode:
    """Install inner as the right preconditioner of outer.

    Newton then solves the system perturbed by the preconditioner; Anderson
    and NGMRES use the inner application as the trial step.  Nonlinear CG has
    no natural right-preconditioned form and is rejected.
    """
    if outer.kind not in ("newton", "anderson", "ngmres", "nrich"):
        raise ConfigurationError(
            f"right preconditioning is not applicable to {outer.kind!r}")
    return outer.replace(right_pc=inner)


__all__ = [
    "CompositeSolver", "additive_step", "multiplicative_step",
    "left_precond_residual", "right_precond_wrap",
    "LeftPreconditionedProblem",
]
