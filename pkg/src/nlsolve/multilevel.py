"""Grid hierarchies, intergrid transfers, the nonlinear (full approximation
scheme) V-cycle, and a linear geometric multigrid V-cycle.

Coarsening halves each grid direction by the rule n_coarse = (n_fine+1)/2,
so admissible fine sizes satisfy n_fine = 2*n_coarse - 1.  Problems are
rediscretized on every level through their coarsening hook; nothing is
assembled by Galerkin products.  The nonlinear cycle differs from linear
multigrid only in the coarse right-hand side b_H = R(b - F(x)) + F_H(inject
x), which makes it an identity-preserving correction: a converged fine
solution is a fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .config import (SolverNode, default_fas_coarse, default_fas_smoother)
from .core import ConfigurationError, GridLayout, NonlinearProblem
from .solvers import InnerSolveError, NonlinearSolver, build_solver


# ---------------------------------------------------------------------------
# coarsening arithmetic

def coarsen_layout(layout: GridLayout) -> GridLayout:
    def down(n):
        nc = (n + 1) // 2
        if n != 2 * nc - 1 or nc < 2:
            raise ConfigurationError(_size_message(n))
        return nc

    nxc = down(layout.nx)
    nyc = layout.ny if layout.ny == 1 else down(layout.ny)
    return GridLayout(nxc, nyc, layout.dof)


def _size_message(n):
    admissible = [2 * k - 1 for k in range(2, 10)]
    return (f"grid size {n} cannot be coarsened; sizes must be of the form "
            f"2k-1 with k >= 2 (e.g. {admissible} ...)")


def admissible_sizes(levels, up_to=1025):
    """Fine sizes that support `levels` levels of (n+1)/2 coarsening:
    n = (c-1)*2^(levels-1) + 1 for a coarsest size c >= 2."""
    step = 2 ** (levels - 1)
    out = []
    c = 2
    while (c - 1) * step + 1 <= up_to:
        out.append((c - 1) * step + 1)
        c += 1
    return out


def max_levels(layout: GridLayout, floor=3) -> int:
    """Depth of the natural coarsening chain, stopping at `floor` nodes."""
    levels = 1
    cur = layout
    while True:
        try:
            nxt = coarsen_layout(cur)
        except ConfigurationError:
            break
        if nxt.nx < floor or (nxt.ny != 1 and nxt.ny < floor):
            break
        cur = nxt
        levels += 1
    return levels


# ---------------------------------------------------------------------------
# transfers

@dataclass(frozen=True)
class TransferOps:
    """Restriction (full weighting), prolongation (bilinear), and injection
    between one adjacent fine/coarse layout pair, applied per dof."""

    fine: GridLayout
    coarse: GridLayout

    def __post_init__(self):
        ok = (self.fine.nx == 2 * self.coarse.nx - 1 and
              self.fine.dof == self.coarse.dof and
              (self.fine.ny == self.coarse.ny == 1 or
               self.fine.ny == 2 * self.coarse.ny - 1))
        if not ok:
            raise ConfigurationError(
                f"layouts {self.fine} and {self.coarse} are not an adjacent "
                "coarsening pair")

    def _shape(self, layout):
        return (layout.ny, layout.nx, layout.dof)

    def inject(self, v) -> np.ndarray:
        F = np.asarray(v, dtype=float).reshape(self._shape(self.fine))
        return F[::2, ::2, :].reshape(-1).copy()

    def restrict(self, v) -> np.ndarray:
        F = np.asarray(v, dtype=float).reshape(self._shape(self.fine))
        C = F[::2, ::2, :].copy()     # boundary coarse nodes by injection
        if self.fine.ny == 1:
            C[0, 1:-1] = (0.25 * F[0, 1:-3:2] + 0.5 * F[0, 2:-2:2]
                          + 0.25 * F[0, 3:-1:2])
        else:
            C[1:-1, 1:-1] = (
                0.25 * F[2:-2:2, 2:-2:2]
                + 0.125 * (F[2:-2:2, 1:-3:2] + F[2:-2:2, 3:-1:2]
                           + F[1:-3:2, 2:-2:2] + F[3:-1:2, 2:-2:2])
                + 0.0625 * (F[1:-3:2, 1:-3:2] + F[1:-3:2, 3:-1:2]
                            + F[3:-1:2, 1:-3:2] + F[3:-1:2, 3:-1:2]))
        return C.reshape(-1)

    def prolong(self, v) -> np.ndarray:
        C = np.asarray(v, dtype=float).reshape(self._shape(self.coarse))
        F = np.zeros(self._shape(self.fine))
        F[::2, ::2] = C
        F[::2, 1::2] = 0.5 * (C[:, :-1] + C[:, 1:])
        F[1::2, ::2] = 0.5 * (C[:-1, :] + C[1:, :])
        F[1::2, 1::2] = 0.25 * (C[:-1, :-1] + C[:-1, 1:]
                                + C[1:, :-1] + C[1:, 1:])
        return F.reshape(-1)


def transfer(kind, v, from_layout, to_layout) -> np.ndarray:
    """Named transfer between adjacent layouts (coarse side second for
    restrict/inject, first for prolong)."""
    if kind in ("restrict", "inject"):
        ops = TransferOps(from_layout, to_layout)
        return ops.restrict(v) if kind == "restrict" else ops.inject(v)
    if kind == "prolong":
        return TransferOps(to_layout, from_layout).prolong(v)
    raise ConfigurationError(f"unknown transfer kind {kind!r}")


# ---------------------------------------------------------------------------
# hierarchy

@dataclass(frozen=True)
class Level:
    layout: GridLayout
    problem: NonlinearProblem


@dataclass(frozen=True)
class GridHierarchy:
    levels: tuple          # fine -> coarse
    transfers: tuple       # transfers[k] couples levels k and k+1

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def problem(self, k) -> NonlinearProblem:
        return self.levels[k].problem


def build_hierarchy(problem, levels) -> GridHierarchy:
    if levels < 1:
        raise ConfigurationError("hierarchy needs at least one level")
    lv = [Level(problem.layout, problem)]
    tr = []
    for _ in range(levels - 1):
        try:
            cl = coarsen_layout(lv[-1].layout)
        except ConfigurationError:
            sizes = admissible_sizes(levels)
            raise ConfigurationError(
                f"cannot build {levels} levels from {problem.layout}; "
                f"admissible fine sizes for {levels} levels: {sizes}")
        tr.append(TransferOps(lv[-1].layout, cl))
        lv.append(Level(cl, lv[-1].problem.coarsen(cl)))
    return GridHierarchy(levels=tuple(lv), transfers=tuple(tr))


# ---------------------------------------------------------------------------
# nonlinear V-cycle

def fas_vcycle(hier, level, b, x, smoother, coarse, stats) -> np.ndarray:
    """One V(1,1) cycle of the full approximation scheme from level down.

    Each level solves F(x) = b for its own rediscretized F and the passed b;
    the recursion applies the same formula uniformly with the modified
    right-hand side.  Level solves are best effort: a smoother or coarse
    solver that stalls passes its last iterate on, and only a non-finite
    state aborts the cycle.
    """
    if isinstance(smoother, SolverNode):
        smoother = build_solver(smoother, role="inner")
    if isinstance(coarse, SolverNode):
        coarse = build_solver(coarse, role="inner")
    lp = hier.problem(level).with_rhs(b)

    if level == hier.n_levels - 1 and level > 0:
        x_c, _ = coarse.apply(lp, x, stats)
        _require_finite(x_c, f"coarse solve on level {level}")
        return x_c

    x_s, _ = smoother.apply(lp, x, stats)
    _require_finite(x_s, f"pre-smoother on level {level}")

    if level + 1 < hier.n_levels:
        ops = hier.transfers[level]
        cp = hier.problem(level + 1)
        x_H = ops.inject(x_s)
        r_f = lp.residual(x_s, stats)                  # F(x_s) - b
        F_H = cp.residual(x_H, stats) + cp.b           # F_H at the injection
        b_H = ops.restrict(-r_f) + F_H
        x_c = fas_vcycle(hier, level + 1, b_H, x_H, smoother, coarse, stats)
        x_s = x_s + ops.prolong(x_c - x_H)
        if lp.dirichlet_rows is not None:
            rows = lp.dirichlet_rows()
            x_s[rows] = b[rows]

    x_out, _ = smoother.apply(lp, x_s, stats)
    _require_finite(x_out, f"post-smoother on level {level}")
    return x_out


def _require_finite(x, what):
    if not np.all(np.isfinite(x)):
        raise InnerSolveError(f"{what} produced a non-finite state")


class FASSolver(NonlinearSolver):
    kind = "fas"
    needs_residual = False

    def __init__(self, node, role="top"):
        super().__init__(node, role)
        self.levels = node.params.get("levels")
        sm = node.smoother if node.smoother is not None else default_fas_smoother()
        co = node.coarse if node.coarse is not None else default_fas_coarse()
        self.smoother = build_solver(sm, role="inner")
        self.coarse = build_solver(co, role="inner")
        self._bound = {}

    def hierarchy(self, problem) -> GridHierarchy:
        key = id(problem)
        if key not in self._bound:
            levels = self.levels
            if levels is None:
                levels = max_levels(problem.layout)
            hier = build_hierarchy(problem, int(levels))
            self._bound[key] = (hier, problem)
        return self._bound[key][0]

    def _step(self, problem, x, r, rnorm, stats):
        hier = self.hierarchy(problem)
        x_new = fas_vcycle(hier, 0, problem.b, x, self.smoother, self.coarse,
                           stats)
        return x_new, None


# ---------------------------------------------------------------------------
# linear multigrid

@dataclass(frozen=True)
class MGSmootherConfig:
    omega: float = 1.0
    sweeps: int = 1
    symmetric: bool = True


def linear_mg_vcycle(hier, J_levels, b, x, smoother_cfg=None, stats=None,
                     level=0) -> np.ndarray:
    """One linear V(1,1) cycle for the per-level matrices J_levels; SOR
    smoothing, direct LU on the coarsest level."""
    cfg = smoother_cfg if smoother_cfg is not None else MGSmootherConfig()
    A = J_levels[level]
    x = np.array(x, dtype=float)

    if level == len(J_levels) - 1 and level > 0:
        return linalg.lu_solve(linalg.sparse_lu(A), b)

    x = linalg.sor_sweep(A, b, x, omega=cfg.omega, sweeps=cfg.sweeps,
                         symmetric=cfg.symmetric)
    if level + 1 < len(J_levels):
        ops = hier.transfers[level]
        r = b - A @ x
        r_H = ops.restrict(r)
        e_H = linear_mg_vcycle(hier, J_levels, r_H,
                               np.zeros_like(r_H), cfg, stats, level + 1)
        x = x + ops.prolong(e_H)
    return linalg.sor_sweep(A, b, x, omega=cfg.omega, sweeps=cfg.sweeps,
                            symmetric=cfg.symmetric)
