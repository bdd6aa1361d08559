"""Linear preconditioners for the Krylov solve inside Newton.

Each preconditioner is set up fresh at every outer Newton iteration (the
Jacobian changes) but keeps its structural state: subdomain index sets,
grid hierarchies, and the like survive across setups.
"""

from __future__ import annotations

import numpy as np

from . import linalg
from .core import ConfigurationError


class LUPreconditioner:
    def __init__(self, params):
        self.ordering = params.get("ordering", "natural")
        self.factors = None

    def setup(self, J, x, problem, stats):
        self.factors = linalg.sparse_lu(J, ordering=self.ordering)

    def apply(self, v):
        return self.factors.solve(v)


class JacobiPreconditioner:
    def __init__(self, params):
        self.diag = None

    def setup(self, J, x, problem, stats):
        d = linalg.as_csr(J).diagonal()
        if np.any(d == 0.0):
            row = int(np.argmax(d == 0.0))
            raise ConfigurationError(f"zero diagonal at row {row}; jacobi "
                                     "preconditioning needs a full diagonal")
        self.diag = d

    def apply(self, v):
        return v / self.diag


class SORPreconditioner:
    def __init__(self, params):
        self.omega = float(params.get("omega", 1.0))
        self.sweeps = int(params.get("sweeps", 1))
        self.symmetric = bool(params.get("symmetric", True))
        self.J = None

    def setup(self, J, x, problem, stats):
        self.J = linalg.as_csr(J)

    def apply(self, v):
        return linalg.sor_sweep(self.J, v, np.zeros_like(v), omega=self.omega,
                                sweeps=self.sweeps, symmetric=self.symmetric)


class ASMPreconditioner:
    """Restricted additive Schwarz: box LU solves, owned-dof injection."""

    def __init__(self, params):
        self.overlap = params.get("overlap")
        self.grid = params.get("grid")
        self._decomp = None
        self._factors = None

    def setup(self, J, x, problem, stats):
        if self._decomp is None:
            from .decomposition import build_subdomains
            overlap = self.overlap
            if overlap is None:
                overlap = problem.subdomain_overlap_default
            grid = self.grid
            if grid is None:
                grid = problem.subdomain_grid_default
            self._decomp = build_subdomains(problem.layout, grid=grid,
                                            overlap=int(overlap))
        J = linalg.as_csr(J)
        self._factors = [linalg.sparse_lu(J[s.indices, :][:, s.indices])
                         for s in self._decomp.subs]

    def apply(self, v):
        out = np.zeros_like(v)
        for sub, fac in zip(self._decomp.subs, self._factors):
            sol = fac.solve(v[sub.indices])
            out[sub.owned_global] += sol[sub.owned_local]
        return out


class MGPreconditioner:
    """Geometric multigrid V-cycle with rediscretized per-level Jacobians
    assembled at injected states."""

    def __init__(self, params):
        self.levels = params.get("levels")
        self.smoother_params = {k: params[k] for k in
                                ("omega", "sweeps", "symmetric") if k in params}
        self._hier = None
        self._J_levels = None

    def setup(self, J, x, problem, stats):
        from .multilevel import build_hierarchy, max_levels
        if self._hier is None:
            levels = self.levels
            if levels is None:
                levels = max_levels(problem.layout)
            self._hier = build_hierarchy(problem, int(levels))
        xs = [np.asarray(x, dtype=float)]
        for ops in self._hier.transfers:
            xs.append(ops.inject(xs[-1]))
        Js = [linalg.as_csr(J)]
        for lvl, xk in zip(self._hier.levels[1:], xs[1:]):
            Js.append(linalg.as_csr(lvl.problem.jacobian(xk, stats)))
        self._J_levels = Js

    def apply(self, v):
        from .multilevel import MGSmootherConfig, linear_mg_vcycle
        cfg = MGSmootherConfig(**self.smoother_params)
        return linear_mg_vcycle(self._hier, self._J_levels, v,
                                np.zeros_like(v), cfg)


_KINDS = {
    "lu": LUPreconditioner,
    "jacobi": JacobiPreconditioner,
    "sor": SORPreconditioner,
    "asm": ASMPreconditioner,
    "mg": MGPreconditioner,
}


def make_linear_pc(spec, problem):
    if spec is None or spec.kind == "none":
        return None
    try:
        cls = _KINDS[spec.kind]
    except KeyError:
        raise ConfigurationError(f"unknown linear preconditioner {spec.kind!r}")
    return cls(spec.params)
