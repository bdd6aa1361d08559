"""Shared plumbing for the nonlinear solvers.

Problems are posed as F(x) = b on flat numpy arrays; a residual is always
r(x) = F(x) - b.  The right-hand side is kept separate from F because the
full approximation scheme rebuilds it on every grid level.  All solvers
thread a single SolveStats through nested solves, so counters aggregate
over compositions without any extra bookkeeping.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace

import numpy as np


class ConfigurationError(ValueError):
    """Raised for invalid solver trees, unknown options, bad grids."""


class SingularMatrixError(RuntimeError):
    def __init__(self, row=None, detail=""):
        self.row = row
        msg = "matrix is singular to working precision"
        if row is not None:
            msg += f" (zero pivot in row {row})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


@dataclass(frozen=True)
class GridLayout:
    """Logically rectangular grid of nx*ny nodes with `dof` unknowns per node.

    Unknowns are stored node-major: index(i, j, c) = (j*nx + i)*dof + c.
    A plain vector of n unknowns is the degenerate layout (n, 1, 1).
    """

    nx: int
    ny: int = 1
    dof: int = 1

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1 or self.dof < 1:
            raise ConfigurationError(f"bad grid layout {self.nx}x{self.ny}x{self.dof}")

    @property
    def n(self) -> int:
        return self.nx * self.ny * self.dof

    @property
    def nodes(self) -> int:
        return self.nx * self.ny

    def index(self, i: int, j: int, c: int = 0) -> int:
        return (j * self.nx + i) * self.dof + c


class ConvergedReason(enum.Enum):
    ITERATING = "iterating"
    CONVERGED_RTOL = "converged_rtol"
    CONVERGED_ATOL = "converged_atol"
    CONVERGED_STOL = "converged_stol"
    DIVERGED_MAX_IT = "diverged_max_it"
    DIVERGED_NAN = "diverged_nan"
    DIVERGED_RATIO = "diverged_ratio"
    DIVERGED_LINE_SEARCH = "diverged_line_search"
    DIVERGED_INNER = "diverged_inner"
    DIVERGED_STAGNATION = "diverged_stagnation"

    @property
    def converged(self) -> bool:
        return self.value.startswith("converged")

    @property
    def diverged(self) -> bool:
        return self.value.startswith("diverged")


@dataclass
class ConvergenceParams:
    rtol: float = 1e-8
    atol: float = 1e-50
    stol: float = 0.0          # 0 disables the step-size test
    divtol: float = 1e4
    max_it: int = 50

    def replace(self, **kw) -> "ConvergenceParams":
        return replace(self, **kw)


def check_convergence(rnorm, rnorm0, it, params, step_norm=None, xnorm=None):
    """Classify the state of an iteration; ITERATING means keep going.

    Tested in order: non-finite residual, absolute tolerance, relative
    tolerance, step-size stagnation, divergence ratio, iteration cap.
    """
    if not np.isfinite(rnorm):
        return ConvergedReason.DIVERGED_NAN
    if rnorm <= params.atol:
        return ConvergedReason.CONVERGED_ATOL
    if rnorm <= params.rtol * rnorm0:
        return ConvergedReason.CONVERGED_RTOL
    if (
        params.stol > 0.0
        and step_norm is not None
        and xnorm is not None
        and it > 0
        and step_norm <= params.stol * max(xnorm, 1e-300)
    ):
        return ConvergedReason.CONVERGED_STOL
    if rnorm >= params.divtol * rnorm0 and it > 0:
        return ConvergedReason.DIVERGED_RATIO
    if it >= params.max_it:
        return ConvergedReason.DIVERGED_MAX_IT
    return ConvergedReason.ITERATING


@dataclass
class SolveStats:
    """Work counters shared by a whole solver tree during one solve."""

    nonlinear_its: int = 0
    linear_its: int = 0
    func_evals: int = 0
    jac_evals: int = 0
    pc_applies: int = 0      # linear preconditioner applications
    npc_applies: int = 0     # nonlinear preconditioner applications
    wall_time: float = 0.0
    history: list = field(default_factory=list)   # [(it, rnorm), ...]

    def record(self, it: int, rnorm: float):
        self.history.append((it, float(rnorm)))

    def counters(self) -> dict:
        return {
            "nit": self.nonlinear_its,
            "lit": self.linear_its,
            "func": self.func_evals,
            "jac": self.jac_evals,
            "pc": self.pc_applies,
            "npc": self.npc_applies,
        }


@dataclass
class SolveResult:
    x: np.ndarray
    reason: ConvergedReason
    rnorm: float
    stats: SolveStats

    @property
    def converged(self) -> bool:
        return self.reason.converged


# ---------------------------------------------------------------------------
# vector kernels

def dot(x: np.ndarray, y: np.ndarray) -> float:
    if x.shape != y.shape:
        raise ValueError(f"length mismatch in dot: {x.shape} vs {y.shape}")
    return float(np.dot(x, y))


def norm2(x: np.ndarray) -> float:
    return float(np.sqrt(np.dot(x, x)))


def axpy(alpha: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return y + alpha*x without modifying the operands."""
    if x.shape != y.shape:
        raise ValueError(f"length mismatch in axpy: {x.shape} vs {y.shape}")
    return y + alpha * x


# ---------------------------------------------------------------------------
# problems

class NonlinearProblem:
    """F(x) = b on a structured grid.

    `f` maps a flat state vector to F(x); `jac` returns the sparse Jacobian
    of F at x.  Optional hooks let concrete problems expose structure:

    coarsen_hook(layout)      rediscretize on a coarser layout (for FAS/MG)
    block_residual(x, k, b)   per-node residual F_k(x) - b_k and block Jacobian
    fast_block_sweep(x, eps, m_b, b)
                              natively ordered block Gauss-Seidel-Newton sweep;
                              mutates x, fills eps entries that are < 0 on the
                              first visit, returns the skipped-block count
    dirichlet_rows()          indices of rows with residual x_i - b_i; the
                              values b_i are re-imposed after prolongation
    """

    def __init__(self, f, layout, b=None, jac=None, *, name="",
                 symmetric_jacobian=False):
        if isinstance(layout, int):
            layout = GridLayout(layout)
        self.layout = layout
        self._f = f
        self._jac = jac
        self.b = np.zeros(layout.n) if b is None else np.asarray(b, dtype=float)
        if self.b.shape != (layout.n,):
            raise ConfigurationError(
                f"rhs length {self.b.shape} does not match layout n={layout.n}")
        self.name = name
        self.symmetric_jacobian = symmetric_jacobian
        self.coarsen_hook = None
        self.block_residual = None
        self.fast_block_sweep = None
        self.dirichlet_rows = None
        self.ksp_rtol_default = None
        self.subdomain_grid_default = (2, 2)
        self.subdomain_overlap_default = 6
        self.params = {}

    @property
    def n(self) -> int:
        return self.layout.n

    def f_of(self, x: np.ndarray) -> np.ndarray:
        return self._f(x)

    def residual(self, x, stats=None) -> np.ndarray:
        return evaluate_residual(self, x, stats)

    def jacobian(self, x, stats=None):
        if self._jac is None:
            raise ConfigurationError(f"problem {self.name!r} provides no Jacobian")
        if stats is not None:
            stats.jac_evals += 1
        return self._jac(x)

    def has_jacobian(self) -> bool:
        return self._jac is not None

    def with_rhs(self, b_new) -> "NonlinearProblem":
        """Same operator and hooks, different right-hand side."""
        p = NonlinearProblem(self._f, self.layout, b=b_new, jac=self._jac,
                             name=self.name, symmetric_jacobian=self.symmetric_jacobian)
        p.coarsen_hook = self.coarsen_hook
        p.block_residual = self.block_residual
        p.fast_block_sweep = self.fast_block_sweep
        p.dirichlet_rows = self.dirichlet_rows
        p.ksp_rtol_default = self.ksp_rtol_default
        p.subdomain_grid_default = self.subdomain_grid_default
        p.subdomain_overlap_default = self.subdomain_overlap_default
        p.params = self.params
        return p

    def coarsen(self, layout) -> "NonlinearProblem":
        if self.coarsen_hook is None:
            raise ConfigurationError(f"problem {self.name!r} cannot be coarsened")
        return self.coarsen_hook(layout)


def evaluate_residual(problem, x, stats=None) -> np.ndarray:
    """r(x) = F(x) - b.  Exactly one func_evals increment per call."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.layout.n,):
        raise ValueError(
            f"state length {x.shape} does not match layout n={problem.layout.n}")
    if stats is not None:
        stats.func_evals += 1
    return problem.f_of(x) - problem.b


def matrix_problem(A, b, layout=None, name="linear") -> NonlinearProblem:
    """Affine problem A x = b; handy for oracles and unit tests."""
    from . import linalg

    A = linalg.as_csr(A)
    n = A.shape[0]
    if layout is None:
        layout = GridLayout(n)
    b = np.asarray(b, dtype=float)
    prob = NonlinearProblem(lambda x: A @ x, layout, b=b, jac=lambda x: A,
                            name=name, symmetric_jacobian=linalg.is_symmetric(A))
    prob.block_residual = _csr_block_residual(A, layout)
    return prob


def _csr_block_residual(A, layout):
    # takes the right-hand side as an argument so the hook survives with_rhs
    dof = layout.dof
    indptr, indices, data = A.indptr, A.indices, A.data

    def block_residual(x, k, b):
        rows = range(k * dof, (k + 1) * dof)
        rb = np.empty(dof)
        Jb = np.zeros((dof, dof))
        for out, row in enumerate(rows):
            lo, hi = indptr[row], indptr[row + 1]
            cols = indices[lo:hi]
            vals = data[lo:hi]
            acc = 0.0
            for c, v in zip(cols, vals):
                acc += v * x[c]
            rb[out] = acc - b[row]
            inblk = (cols >= k * dof) & (cols < (k + 1) * dof)
            Jb[out, cols[inblk] - k * dof] = vals[inblk]
        return rb, Jb

    return block_residual


# ---------------------------------------------------------------------------
# diagnostics

def fd_jacobian_error(problem, x, stats=None, cols=None) -> float:
    """Worst relative column error of the assembled Jacobian against central
    finite differences, max over the tested columns.

    Column j is compared as J e_j vs (r(x+h e_j) - r(x-h e_j)) / 2h with
    h = 1e-6 * max(1, |x_j|); errors are scaled by (1 + column magnitude).
    """
    x = np.asarray(x, dtype=float)
    J = problem.jacobian(x, stats)
    n = problem.layout.n
    if cols is None:
        cols = range(n)
    worst = 0.0
    for j in cols:
        h = 1e-6 * max(1.0, abs(x[j]))
        xp = x.copy(); xp[j] += h
        xm = x.copy(); xm[j] -= h
        fd = (problem.residual(xp, stats) - problem.residual(xm, stats)) / (2 * h)
        col = np.asarray(J[:, j].todense()).ravel() if hasattr(J, "todense") else J[:, j]
        scale = 1.0 + float(np.max(np.abs(col))) if col.size else 1.0
        err = float(np.max(np.abs(col - fd))) / scale
        worst = max(worst, err)
    return worst


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        return False
