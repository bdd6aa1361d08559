"""The global nonlinear iterations: Newton-Krylov, nonlinear Richardson,
Anderson mixing / NGMRES, limited-memory quasi-Newton, and nonlinear CG.

Every solver exposes two entry points.  `solve` runs a convergence-checked
outer iteration and records history; `apply` runs the solver for its
configured iteration budget as an inner method (a nonlinear preconditioner,
composite member, or multigrid smoother) without consulting outer
tolerances.  A left nonlinear preconditioner N turns the problem into the
residual substitution x - N(r, x); that wrapping is shared by all solvers
except Newton, which pairs the substituted residual with the Schwarz
approximate Jacobian (the ASPIN construction) instead.
"""

from __future__ import annotations

import logging

import numpy as np

from . import linalg
from .config import (LinearPCSpec, SolverNode, resolve_convergence,
                     resolve_linesearch)
from .core import (ConfigurationError, ConvergedReason, SingularMatrixError,
                   SolveResult, SolveStats, Timer, check_convergence, dot,
                   norm2)
from .linesearch import run_linesearch

log = logging.getLogger(__name__)


class InnerSolveError(RuntimeError):
    """An inner (preconditioner) solve failed; propagated with context."""


class _StepFailure(Exception):
    def __init__(self, reason, x_last=None):
        self.reason = reason
        self.x_last = x_last   # partial progress worth reporting, if any


class NonlinearSolver:
    kind = "base"
    needs_residual = True   # inner applications track the global residual

    def __init__(self, node: SolverNode, role="top"):
        self.node = node
        self.role = role
        self.conv = resolve_convergence(node, role)
        self.ls_cfg = resolve_linesearch(node)
        self._lp_solver = build_solver(node.left_pc, role="inner") \
            if node.left_pc is not None else None
        self._rp_solver = build_solver(node.right_pc, role="inner") \
            if node.right_pc is not None else None
        self._carried_lam = None

    # -- hooks -------------------------------------------------------------
    def _begin(self, problem, x):
        """Reset per-application state."""

    def _step(self, problem, x, r, rnorm, stats):
        raise NotImplementedError

    def _working_problem(self, problem):
        if self._lp_solver is None or self.kind == "newton":
            return problem
        return LeftPreconditionedProblem(problem, self._lp_solver)

    def _carry(self):
        return self._carried_lam if self.ls_cfg.carry_lambda else None

    def _ls_problem(self, problem):
        # optional switch: search on the original residual even when a
        # left-preconditioned one drives the iteration
        if (not self.ls_cfg.precond_residual
                and isinstance(problem, LeftPreconditionedProblem)):
            return problem.base
        return problem

    # -- outer solve -------------------------------------------------------
    def solve(self, problem, x0, stats=None, monitor=None) -> SolveResult:
        stats = SolveStats() if stats is None else stats
        with Timer() as t:
            x, reason, rnorm = self._drive(problem, np.array(x0, dtype=float),
                                           stats, monitor)
        stats.wall_time += t.elapsed
        return SolveResult(x, reason, rnorm, stats)

    def _drive(self, problem, x, stats, monitor):
        wp = self._working_problem(problem)
        self._begin(wp, x)
        try:
            r = wp.residual(x, stats)
        except InnerSolveError:
            return x, ConvergedReason.DIVERGED_INNER, np.nan
        rnorm = rnorm0 = norm2(r)
        stats.record(0, rnorm)
        if monitor:
            monitor(0, rnorm)
        it = 0
        step_norm = xnorm = None
        while True:
            reason = check_convergence(rnorm, rnorm0, it, self.conv,
                                       step_norm, xnorm)
            if reason is not ConvergedReason.ITERATING:
                break
            try:
                x_new, r_new = self._step(wp, x, r, rnorm, stats)
                if r_new is None:
                    r_new = wp.residual(x_new, stats)
            except _StepFailure as fail:
                reason = fail.reason
                if fail.x_last is not None:
                    x = fail.x_last
                break
            except InnerSolveError:
                reason = ConvergedReason.DIVERGED_INNER
                break
            except SingularMatrixError:
                reason = ConvergedReason.DIVERGED_INNER
                break
            if self.conv.stol > 0.0:
                step_norm = norm2(x_new - x)
                xnorm = norm2(x_new)
            it += 1
            stats.nonlinear_its += 1
            x, r = x_new, r_new
            rnorm = norm2(r)
            stats.record(it, rnorm)
            if monitor:
                monitor(it, rnorm)
        return x, reason, rnorm

    # -- inner application -------------------------------------------------
    def apply(self, problem, x, stats):
        """Run the iteration budget from x; returns (x, ok).  An inner solver
        may stop early against its own tolerances but never sees the caller's.
        """
        wp = self._working_problem(problem)
        x = np.array(x, dtype=float)
        self._begin(wp, x)
        budget = self.conv.max_it
        if budget <= 0:
            return x, True
        try:
            if not self.needs_residual:
                for _ in range(budget):
                    x = self._step(wp, x, None, None, stats)[0]
                return x, True
            r = wp.residual(x, stats)
            rnorm = rn0 = norm2(r)
            for it in range(budget):
                if not np.isfinite(rnorm):
                    return x, False
                if rnorm <= max(self.conv.atol, self.conv.rtol * rn0):
                    break
                x, r_new = self._step(wp, x, r, rnorm, stats)
                if it + 1 == budget:
                    break
                r = r_new if r_new is not None else wp.residual(x, stats)
                rnorm = norm2(r)
            return x, True
        except _StepFailure as fail:
            if fail.x_last is not None:
                x = fail.x_last
            return x, False
        except (InnerSolveError, SingularMatrixError):
            return x, False


class LeftPreconditionedProblem:
    """Residual substitution r_l(x) = x - N(r, x) for an inner solver N.

    Each residual evaluation is one nonlinear preconditioner application;
    the inner solver's own work lands in the same shared stats.  No Jacobian
    is available; Newton handles its Schwarz case separately.
    """

    def __init__(self, base, inner):
        self.base = base
        self.inner = inner
        self.layout = base.layout
        self.b = np.zeros(base.layout.n)
        self.name = f"{base.name}|left-preconditioned"
        self.symmetric_jacobian = base.symmetric_jacobian

    @property
    def ksp_rtol_default(self):
        return self.base.ksp_rtol_default

    def residual(self, x, stats=None):
        if stats is not None:
            stats.npc_applies += 1
        y, ok = self.inner.apply(self.base, x, stats)
        if not ok:
            raise InnerSolveError(
                f"inner solver {self.inner.kind!r} failed during "
                "left-preconditioned residual evaluation")
        return x - y

    def jacobian(self, x, stats=None):
        raise ConfigurationError(
            "left-preconditioned residuals have no assembled Jacobian")

    def has_jacobian(self):
        return False


def left_precond_residual(problem, inner, x, stats) -> np.ndarray:
    """One evaluation of x - N(r, x) for an inner solver or solver node."""
    if isinstance(inner, SolverNode):
        inner = build_solver(inner, role="inner")
    return LeftPreconditionedProblem(problem, inner).residual(x, stats)


# ---------------------------------------------------------------------------
# Newton-Krylov

class NewtonSolver(NonlinearSolver):
    kind = "newton"

    def __init__(self, node, role="top"):
        super().__init__(node, role)
        self.lpc_spec = node.linear_pc if node.linear_pc is not None \
            else LinearPCSpec("none")
        self.ksp_rtol = node.params.get("ksp_rtol")
        self.fallback_steepest = False
        self._pc = None
        if self._lp_solver is not None:
            # ASPIN: keep subdomain factors from each Schwarz application
            self._lp_solver.cache_factors = True

    def _working_problem(self, problem):
        if self._lp_solver is None:
            return problem
        return LeftPreconditionedProblem(problem, self._lp_solver)

    def _begin(self, problem, x):
        self._pc = None

    def _krylov_cfg(self, problem):
        rtol = self.ksp_rtol
        if rtol is None:
            rtol = getattr(problem, "ksp_rtol_default", None)
        if rtol is None:
            rtol = 1e-5
        return linalg.KrylovConfig(rtol=float(rtol), restart=30, max_it=500)

    def _build_pc(self, problem, J, x, stats):
        from .preconditioners import make_linear_pc
        if self._pc is None:
            self._pc = make_linear_pc(self.lpc_spec, problem)
        if self._pc is None:
            return None
        self._pc.setup(J, x, problem, stats)
        return self._pc.apply

    def _direction(self, problem, x, r, stats):
        """Newton direction d = -J^{-1} r and the operator for the slope."""
        if self._lp_solver is not None:
            from .decomposition import aspin_jacobian_apply
            base = problem.base
            J = base.jacobian(x, stats)
            decomp = self._lp_solver.decomposition(base)
            factors = self._lp_solver.cached_factors
            variant = self._lp_solver.variant
            op = lambda v: aspin_jacobian_apply(J, decomp, factors, v,
                                                variant)
            d, ok, _ = linalg.gmres(op, -r, config=self._krylov_cfg(problem),
                                    stats=stats)
            return d, ok, op
        J = problem.jacobian(x, stats)
        op = lambda v: J @ v
        try:
            pc = self._build_pc(problem, J, x, stats)
            d, ok, _ = linalg.gmres(J, -r, config=self._krylov_cfg(problem),
                                    M=pc, stats=stats)
        except SingularMatrixError:
            return -r, False, op
        return d, ok, op

    def _step(self, problem, x, r, rnorm, stats):
        if self._rp_solver is not None:
            x, ok = self._rp_solver.apply(problem, x, stats)
            stats.npc_applies += 1
            if not ok:
                raise _StepFailure(ConvergedReason.DIVERGED_INNER)
            r = problem.residual(x, stats)
            if not np.all(np.isfinite(r)):
                raise _StepFailure(ConvergedReason.DIVERGED_NAN)
        d, ok, op = self._direction(problem, x, r, stats)
        if not ok or not np.all(np.isfinite(d)):
            d = -r
            self.fallback_steepest = True
        outcome = run_linesearch(self.ls_cfg, self._ls_problem(problem), x, d,
                                 r, stats, j_apply=op, lambda0=self._carry())
        if not outcome.succeeded:
            x_last = None
            if outcome.lam > 0.0 and outcome.r_new is not None:
                # a failed search may still have found a slightly better
                # point; pass it along so subdomain and smoother callers
                # that run best effort keep the creep
                x_last = x + outcome.lam * d
            raise _StepFailure(ConvergedReason.DIVERGED_LINE_SEARCH, x_last)
        self._carried_lam = outcome.lam
        return x + outcome.lam * d, outcome.r_new


# ---------------------------------------------------------------------------
# nonlinear Richardson

class NRichardsonSolver(NonlinearSolver):
    kind = "nrich"

    def __init__(self, node, role="top"):
        super().__init__(node, role)
        self._ls_failures = 0

    def _begin(self, problem, x):
        self._ls_failures = 0
        self._carried_lam = None

    def _step(self, problem, x, r, rnorm, stats):
        if self._rp_solver is not None:
            x, ok = self._rp_solver.apply(problem, x, stats)
            stats.npc_applies += 1
            if not ok:
                raise _StepFailure(ConvergedReason.DIVERGED_INNER)
            r = problem.residual(x, stats)
        d = -r
        outcome = run_linesearch(self.ls_cfg, self._ls_problem(problem), x, d,
                                 r, stats, lambda0=self._carry())
        if not outcome.succeeded:
            self._ls_failures += 1
            if self._ls_failures >= 2:
                raise _StepFailure(ConvergedReason.DIVERGED_LINE_SEARCH)
        else:
            self._ls_failures = 0
            self._carried_lam = outcome.lam
        return x + outcome.lam * d, outcome.r_new


# ---------------------------------------------------------------------------
# Anderson mixing / NGMRES

class AndersonSolver(NonlinearSolver):
    """Combines the current trial point with up to m stored trial points by
    minimizing the linearized residual norm of the affine combination.  The
    trial is x + lam_mix*r, or one application of the right preconditioner.
    NGMRES is the same iteration plus a history restart whenever the trial
    residual is twice as large as the best stored one.
    """

    kind = "anderson"

    def __init__(self, node, role="top"):
        super().__init__(node, role)
        self.m = int(node.params.get("m", 30))
        self.lam_mix = float(node.params.get("damping", -1.0))
        self.restart_on_bad_trial = node.kind == "ngmres"
        self.kind = node.kind

    def _begin(self, problem, x):
        self._hist = []          # (x_trial, r_trial, norm) oldest..newest
        self._rank0_streak = 0

    def _step(self, problem, x, r, rnorm, stats):
        if self._rp_solver is not None:
            xm, ok = self._rp_solver.apply(problem, x, stats)
            stats.npc_applies += 1
            if not ok:
                raise _StepFailure(ConvergedReason.DIVERGED_INNER)
        else:
            xm = x + self.lam_mix * r
        rm = problem.residual(xm, stats)
        rmnorm = norm2(rm)
        if not np.isfinite(rmnorm):
            raise _StepFailure(ConvergedReason.DIVERGED_NAN)

        if (self.restart_on_bad_trial and self._hist
                and rmnorm > 2.0 * min(h[2] for h in self._hist)):
            self._hist.clear()

        cols = [rk - rm for (_, rk, _) in self._hist]
        w, rank = linalg.least_squares_minnorm(cols, -rm)
        if cols and rank == 0:
            # all stored trials numerically coincide with this one
            self._rank0_streak += 1
            if self._rank0_streak >= 2:
                raise _StepFailure(ConvergedReason.DIVERGED_STAGNATION)
            self._hist.clear()
            x_new = xm
        else:
            self._rank0_streak = 0
            x_new = xm.copy()
            for wk, (xk, _, _) in zip(w, self._hist):
                x_new += wk * (xk - xm)
            if cols and rank < len(cols):
                # minimum-norm weights already ignore the dependent
                # directions; drop stale entries so the window rebuilds
                del self._hist[:len(cols) - rank]
        self._hist.append((xm, rm, rmnorm))
        if len(self._hist) > self.m:
            self._hist.pop(0)
        return x_new, None


# ---------------------------------------------------------------------------
# quasi-Newton (L-BFGS)

def lbfgs_two_loop(pairs, g):
    """Apply the limited-memory inverse-BFGS operator to g.

    `pairs` holds (s_k, y_k, rho_k) oldest first.  The first loop walks
    newest to oldest accumulating alpha_k, the second oldest to newest
    applying the corrections; the initial operator is the identity scaled by
    (s.y)/(y.y) of the most recent pair.
    """
    q = np.array(g, dtype=float)
    if not pairs:
        return q
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * dot(s, q)
        q -= a * y
        alphas.append(a)
    s_new, y_new, _ = pairs[-1]
    gamma = dot(s_new, y_new) / dot(y_new, y_new)
    q *= gamma
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * dot(y, q)
        q += (a - b) * s
    return q


def _require_symmetric(problem, kind):
    if not getattr(problem, "symmetric_jacobian", False):
        raise ConfigurationError(
            f"{kind} requires a symmetric-Jacobian problem (set "
            "symmetric_jacobian=True to override)")


class QNSolver(NonlinearSolver):
    kind = "qn"

    def __init__(self, node, role="top"):
        super().__init__(node, role)
        self.m = int(node.params.get("m", 10))
        self.curvature_skips = 0

    def _begin(self, problem, x):
        _require_symmetric(problem, "qn")
        self._pairs = []
        self._carried_lam = None

    def _search(self, problem, x, d, r, stats):
        return run_linesearch(self.ls_cfg, self._ls_problem(problem), x, d, r,
                              stats, lambda0=self._carry())

    def _step(self, problem, x, r, rnorm, stats):
        d = -lbfgs_two_loop(self._pairs, r)
        outcome = self._search(problem, x, d, r, stats)
        if not outcome.succeeded or outcome.lam == 0.0:
            # retry once from a cleared history along the raw residual
            self._pairs = []
            d = -r
            outcome = self._search(problem, x, d, r, stats)
            if not outcome.succeeded or outcome.lam == 0.0:
                raise _StepFailure(ConvergedReason.DIVERGED_LINE_SEARCH)
        self._carried_lam = outcome.lam
        x_new = x + outcome.lam * d
        r_new = outcome.r_new
        if r_new is None:
            r_new = problem.residual(x_new, stats)
        s = x_new - x
        y = r_new - r
        sy = dot(s, y)
        if abs(sy) < 1e-30 * norm2(s) * norm2(y):
            self.curvature_skips += 1
            log.warning("qn: curvature too small, update pair skipped")
        else:
            self._pairs.append((s, y, 1.0 / sy))
            if len(self._pairs) > self.m:
                self._pairs.pop(0)
        return x_new, r_new


# ---------------------------------------------------------------------------
# nonlinear CG

class NCGSolver(NonlinearSolver):
    kind = "ncg"

    def _begin(self, problem, x):
        _require_symmetric(problem, "ncg")
        self._r_prev = None
        self._c_prev = None
        self._carried_lam = None

    def _step(self, problem, x, r, rnorm, stats):
        if self._r_prev is None:
            beta = 0.0
            c = -r
        else:
            denom = dot(self._r_prev, self._r_prev)
            beta = dot(r, r - self._r_prev) / denom if denom > 0 else 0.0
            beta = max(beta, 0.0)
            c = -r + beta * self._c_prev
        outcome = run_linesearch(self.ls_cfg, self._ls_problem(problem), x, c,
                                 r, stats, lambda0=self._carry())
        if not outcome.succeeded:
            c = -r   # restart once, then give up
            outcome = run_linesearch(self.ls_cfg, self._ls_problem(problem),
                                     x, c, r, stats, lambda0=self._carry())
            if not outcome.succeeded:
                raise _StepFailure(ConvergedReason.DIVERGED_LINE_SEARCH)
        self._carried_lam = outcome.lam
        self._r_prev = r
        self._c_prev = c
        return x + outcome.lam * c, outcome.r_new


# ---------------------------------------------------------------------------
# factory

def build_solver(node: SolverNode, role="top") -> NonlinearSolver:
    kind = node.kind
    if kind == "newton":
        return NewtonSolver(node, role)
    if kind == "nrich":
        return NRichardsonSolver(node, role)
    if kind in ("anderson", "ngmres"):
        return AndersonSolver(node, role)
    if kind == "qn":
        return QNSolver(node, role)
    if kind == "ncg":
        return NCGSolver(node, role)
    if kind == "composite":
        from .composition import CompositeSolver
        return CompositeSolver(node, role)
    if kind in ("nasm", "ras"):
        from .decomposition import NASMSolver
        return NASMSolver(node, role)
    if kind == "gsn":
        from .decomposition import GSNSolver
        return GSNSolver(node, role)
    if kind == "fas":
        from .multilevel import FASSolver
        return FASSolver(node, role)
    raise ConfigurationError(f"unknown solver kind {kind!r}")


def print_monitor(it, rnorm):
    print(f"It {it} rnorm {rnorm:g}")


def solve(problem, node_or_text, x0, stats=None, monitor=None) -> SolveResult:
    """Build a solver from a node or DSL text and run a full solve.

    monitor may be a callable(it, rnorm) or True for the standard printer.
    """
    if isinstance(node_or_text, str):
        from .dsl import parse_spec
        node = parse_spec(node_or_text)
    else:
        node = node_or_text
    if monitor is True:
        monitor = print_monitor
    return build_solver(node).solve(problem, x0, stats=stats, monitor=monitor)
