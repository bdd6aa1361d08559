"""Domain decomposition solvers: point-block Gauss-Seidel-Newton and
overlapping nonlinear additive Schwarz (NASM / RAS).

GSN sweeps the grid nodes in natural order, solving each node's dof-sized
nonlinear system by dense Newton while re-reading neighbor values already
updated in the same sweep.  NASM solves overlapping box subproblems, all
from the same global iterate, and injects the corrections back; the RAS
variant injects only each subdomain's owned portion (the injections then
partition the grid), while plain NASM averages overlapping corrections by
their multiplicity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .config import SolverNode, default_sub_solver
from .core import (ConfigurationError, GridLayout, NonlinearProblem,
                   SolveStats, norm2)
from .solvers import NonlinearSolver, build_solver

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# decompositions

@dataclass(frozen=True)
class BlockDecomposition:
    """Contiguous dof-per-node blocks covering the index set exactly."""
    n_b: int
    dof: int

    def rows(self, k) -> slice:
        return slice(k * self.dof, (k + 1) * self.dof)

    @staticmethod
    def from_layout(layout: GridLayout) -> "BlockDecomposition":
        return BlockDecomposition(n_b=layout.nodes, dof=layout.dof)


@dataclass(frozen=True)
class Subdomain:
    box: tuple          # (ix0, ix1, iy0, iy1), half-open node ranges
    owned: tuple
    indices: np.ndarray        # global dof indices of the box, node-major
    owned_local: np.ndarray    # mask over indices: owned by this subdomain
    owned_global: np.ndarray
    layout: GridLayout         # local layout of the box


@dataclass(frozen=True)
class SubdomainDecomposition:
    layout: GridLayout
    grid: tuple                # (P, Q) boxes
    overlap: int
    subs: tuple
    multiplicity: np.ndarray   # per-dof count of covering boxes

    @property
    def n_B(self) -> int:
        return len(self.subs)


def _split_range(n, parts):
    if parts < 1 or parts > n:
        raise ConfigurationError(
            f"cannot split {n} grid lines into {parts} parts")
    base, extra = divmod(n, parts)
    edges = [0]
    for p in range(parts):
        edges.append(edges[-1] + base + (1 if p < extra else 0))
    return [(edges[p], edges[p + 1]) for p in range(parts)]


def _box_indices(layout, ix0, ix1, iy0, iy1):
    ii, jj = np.meshgrid(np.arange(ix0, ix1), np.arange(iy0, iy1),
                         indexing="xy")
    nodes = (jj * layout.nx + ii).ravel(order="C")
    if layout.dof == 1:
        return nodes
    return (nodes[:, None] * layout.dof + np.arange(layout.dof)[None, :]).ravel()


def build_subdomains(layout, grid=(2, 2), overlap=0) -> SubdomainDecomposition:
    """P x Q box partition of the node grid; each owned box is extended by
    `overlap` nodes per side, clipped at the grid boundary."""
    P, Q = grid
    if overlap < 0:
        raise ConfigurationError("overlap must be nonnegative")
    xr = _split_range(layout.nx, P)
    yr = _split_range(layout.ny, Q)
    subs = []
    mult = np.zeros(layout.n)
    for (oy0, oy1) in yr:
        for (ox0, ox1) in xr:
            ix0, ix1 = max(0, ox0 - overlap), min(layout.nx, ox1 + overlap)
            iy0, iy1 = max(0, oy0 - overlap), min(layout.ny, oy1 + overlap)
            idx = _box_indices(layout, ix0, ix1, iy0, iy1)
            bnx, bny = ix1 - ix0, iy1 - iy0
            ii, jj = np.meshgrid(np.arange(ix0, ix1), np.arange(iy0, iy1),
                                 indexing="xy")
            owned_nodes = ((ii >= ox0) & (ii < ox1) &
                           (jj >= oy0) & (jj < oy1)).ravel(order="C")
            owned_local = np.repeat(owned_nodes, layout.dof)
            subs.append(Subdomain(
                box=(ix0, ix1, iy0, iy1), owned=(ox0, ox1, oy0, oy1),
                indices=idx, owned_local=owned_local,
                owned_global=idx[owned_local],
                layout=GridLayout(bnx, bny, layout.dof)))
            mult[idx] += 1.0
    return SubdomainDecomposition(layout=layout, grid=(P, Q), overlap=overlap,
                                  subs=tuple(subs), multiplicity=mult)


def make_subdomain_problem(problem, sub):
    """Box subproblem: unknowns are the box dofs, everything outside the box
    is frozen at the current global iterate (set via the returned cell), and
    the equations are the global residual rows at the box dofs."""
    idx = sub.indices
    cell = {"x": None}

    def f(z):
        xp = cell["x"].copy()
        xp[idx] = z
        return problem.f_of(xp)[idx]

    def jac(z):
        xp = cell["x"].copy()
        xp[idx] = z
        J = linalg.as_csr(problem.jacobian(xp))
        return J[idx, :][:, idx]

    sp = NonlinearProblem(f, sub.layout, b=problem.b[idx],
                          jac=jac if problem.has_jacobian() else None,
                          name=f"{problem.name}|box{sub.box}",
                          symmetric_jacobian=problem.symmetric_jacobian)
    sp.ksp_rtol_default = problem.ksp_rtol_default
    return sp, cell


# ---------------------------------------------------------------------------
# Gauss-Seidel-Newton

class GSNSolver(NonlinearSolver):
    """Multiplicative block sweep in natural node order; each node's small
    dense system gets up to m_b Newton steps, stopping early once the block
    residual falls below eps_b = 1e-12 * (its first-seen norm)."""

    kind = "gsn"
    needs_residual = False

    def __init__(self, node, role="top"):
        super().__init__(node, role)
        self.sweeps = int(node.params.get("sweeps", 1))
        # standalone GSN iterates blocks harder than a smoother does
        self.m_b = int(node.params.get("max_block_it",
                                       5 if role == "top" else 1))
        self.skipped_blocks = 0
        self._eps = None

    def _begin(self, problem, x):
        if problem.block_residual is None and problem.fast_block_sweep is None:
            raise ConfigurationError(
                f"problem {problem.name!r} provides no block residual; "
                "gsn needs one")
        self._eps = np.full(problem.layout.nodes, -1.0)

    def _step(self, problem, x, r, rnorm, stats):
        x = x.copy()
        for _ in range(self.sweeps):
            if problem.fast_block_sweep is not None:
                skipped = problem.fast_block_sweep(x, self._eps, self.m_b,
                                                   problem.b)
                self.skipped_blocks += int(skipped)
            else:
                self._python_sweep(problem, x)
        return x, None

    def _python_sweep(self, problem, x):
        dof = problem.layout.dof
        eps = self._eps
        for k in range(problem.layout.nodes):
            rb, Jb = problem.block_residual(x, k, problem.b)
            nb = norm2(rb)
            if eps[k] < 0.0:
                eps[k] = 1e-12 * nb
            j = 0
            while nb > eps[k] and j < self.m_b:
                if dof == 1:
                    diag = Jb[0, 0]
                    if diag == 0.0 or not np.isfinite(diag):
                        self.skipped_blocks += 1
                        log.warning("singular block %d skipped", k)
                        break
                    x[k] += -rb[0] / diag
                else:
                    try:
                        delta = np.linalg.solve(Jb, -rb)
                    except np.linalg.LinAlgError:
                        self.skipped_blocks += 1
                        log.warning("singular block %d skipped", k)
                        break
                    if not np.all(np.isfinite(delta)):
                        self.skipped_blocks += 1
                        log.warning("non-finite block %d skipped", k)
                        break
                    x[k * dof:(k + 1) * dof] += delta
                j += 1
                if j < self.m_b:
                    rb, Jb = problem.block_residual(x, k, problem.b)
                    nb = norm2(rb)


def gsn_sweep(problem, x, eps_b=None, m_b=1, stats=None, sweeps=1):
    """Standalone sweep entry; eps_b=0 disables the early block exit."""
    node = SolverNode(kind="gsn", params={"sweeps": sweeps,
                                          "max_block_it": m_b})
    solver = GSNSolver(node, role="inner")
    solver._begin(problem, x)
    if eps_b is not None:
        solver._eps[:] = eps_b
    return solver._step(problem, np.array(x, dtype=float), None, None,
                        stats if stats is not None else SolveStats())[0]


# ---------------------------------------------------------------------------
# nonlinear additive Schwarz

class NASMSolver(NonlinearSolver):
    kind = "nasm"
    needs_residual = False

    def __init__(self, node, role="top"):
        super().__init__(node, role)
        self.kind = node.kind           # "nasm" or "ras"
        self.variant = node.kind
        self.overlap = node.params.get("overlap")
        self.sub_node = node.sub if node.sub is not None else default_sub_solver()
        self.cache_factors = False
        self.cached_factors = None
        self.last_failed = ()
        self._bound = {}

    def decomposition(self, problem) -> SubdomainDecomposition:
        return self._bind(problem)[0]

    def _bind(self, problem):
        key = id(problem)
        if key not in self._bound:
            overlap = self.overlap
            if overlap is None:
                overlap = problem.subdomain_overlap_default
            decomp = build_subdomains(problem.layout,
                                      grid=problem.subdomain_grid_default,
                                      overlap=int(overlap))
            pieces = []
            for sub in decomp.subs:
                sp, cell = make_subdomain_problem(problem, sub)
                pieces.append((sub, sp, cell, build_solver(self.sub_node,
                                                           role="inner")))
            # keep a strong ref to the problem so the id key stays valid
            self._bound[key] = (decomp, pieces, problem)
        return self._bound[key][:2]

    def _step(self, problem, x, r, rnorm, stats):
        decomp, pieces = self._bind(problem)
        x_new = x.copy()
        accum = np.zeros_like(x) if self.variant == "nasm" else None
        factors = [] if self.cache_factors else None
        failed = []
        for si, (sub, sp, cell, solver) in enumerate(pieces):
            cell["x"] = x
            z0 = x[sub.indices]
            # best effort: an unconverged subdomain solve still contributes
            # whatever progress it made; only a non-finite state is discarded
            z, _ok = solver.apply(sp, z0, stats)
            if not np.all(np.isfinite(z)):
                failed.append(si)
                z = z0
            corr = z - z0
            if self.variant == "ras":
                x_new[sub.owned_global] += corr[sub.owned_local]
            else:
                accum[sub.indices] += corr
            if factors is not None:
                pc = getattr(solver, "_pc", None)
                fac = getattr(pc, "factors", None)
                if fac is None and sp.has_jacobian():
                    # solver finished without factoring (e.g. converged at
                    # entry); the Schwarz Jacobian still needs the box LU
                    fac = linalg.sparse_lu(sp.jacobian(z, stats))
                factors.append(fac)
        if failed:
            log.warning("non-finite subdomain solves discarded: %s",
                        [pieces[i][0].box for i in failed])
        if len(failed) == len(pieces):
            from .solvers import _StepFailure
            from .core import ConvergedReason
            raise _StepFailure(ConvergedReason.DIVERGED_INNER)
        if self.variant == "nasm":
            x_new = x + accum / decomp.multiplicity
        if factors is not None:
            self.cached_factors = factors
        self.last_failed = tuple(failed)
        return x_new, None


def nasm_step(problem, x, variant="ras", inner=None, overlap=None,
              grid=None, stats=None):
    """One additive Schwarz step from x; returns the updated vector."""
    params = {}
    if overlap is not None:
        params["overlap"] = overlap
    node = SolverNode(kind=variant, params=params, sub=inner)
    solver = NASMSolver(node, role="inner")
    stats = stats if stats is not None else SolveStats()
    old = problem.subdomain_grid_default
    if grid is not None:
        problem.subdomain_grid_default = grid
    try:
        return solver._step(problem, np.array(x, dtype=float), None, None,
                            stats)[0]
    finally:
        problem.subdomain_grid_default = old


def aspin_jacobian_apply(J, decomp, factors, v, variant="ras") -> np.ndarray:
    """Apply the Schwarz-approximate preconditioned Jacobian: w = J v, then
    per-subdomain solves against the cached box factorizations, combined the
    same way the matching Schwarz map combines corrections (owned-dof
    injection for ras, multiplicity-averaged overlap for nasm)."""
    if factors is None:
        raise ConfigurationError(
            "missing cached subdomain factors; apply the Schwarz "
            "preconditioner before its Jacobian")
    w = J @ v
    out = np.zeros_like(np.asarray(v, dtype=float))
    for sub, fac in zip(decomp.subs, factors):
        if fac is None:
            raise ConfigurationError(
                f"missing cached factors for subdomain {sub.box}; the "
                "subdomain solver must use an LU linear preconditioner")
        sol = fac.solve(w[sub.indices])
        if variant == "ras":
            out[sub.owned_global] += sol[sub.owned_local]
        else:
            out[sub.indices] += sol
    if variant != "ras":
        out /= decomp.multiplicity
    return out
