"""Solver tree configuration.

A solver is described by a tree of SolverNode values: the kind of iteration
at this node, its numeric parameters, nested nonlinear preconditioners
(left or right), a linear preconditioner descriptor for Krylov-based nodes,
and structural children (composite members, subdomain solver, multigrid
smoother and coarse solver).  The text format understood by `nlsolve.dsl`
maps one-to-one onto these trees.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .core import ConfigurationError, ConvergenceParams
from .linesearch import KINDS as LS_KINDS
from .linesearch import LineSearchConfig

SOLVER_KINDS = ("newton", "nrich", "anderson", "ngmres", "qn", "ncg",
                "fas", "nasm", "ras", "gsn", "composite")
LINEAR_PC_KINDS = ("lu", "sor", "mg", "asm", "jacobi", "none")

# keys accepted in the text form, by construct
NUMERIC_KEYS = ("m", "levels", "sweeps", "overlap", "max_it", "rtol", "atol",
                "ksp_rtol", "damping", "max_block_it")
NODE_KEYS = ("lp", "rp", "ls", "lpc", "sub", "smoother", "coarse", "type") + NUMERIC_KEYS

_ALLOWED = {
    "newton": {"lp", "rp", "ls", "lpc", "max_it", "rtol", "atol", "ksp_rtol",
               "damping"},
    "nrich": {"lp", "rp", "ls", "max_it", "rtol", "atol", "damping"},
    "anderson": {"lp", "rp", "m", "max_it", "rtol", "atol", "damping"},
    "ngmres": {"lp", "rp", "m", "max_it", "rtol", "atol", "damping"},
    "qn": {"lp", "ls", "m", "max_it", "rtol", "atol", "damping"},
    "ncg": {"lp", "ls", "max_it", "rtol", "atol", "damping"},
    "fas": {"levels", "smoother", "coarse", "max_it", "rtol", "atol"},
    "nasm": {"sub", "overlap", "max_it", "rtol", "atol"},
    "ras": {"sub", "overlap", "max_it", "rtol", "atol"},
    "gsn": {"sweeps", "max_block_it", "max_it", "rtol", "atol"},
    "composite": {"type", "max_it", "rtol", "atol", "weights"},
}

_DEFAULT_LS = {
    "newton": "bt",
    "nrich": "l2",
    "qn": "cp",
    "ncg": "cp",
}


@dataclass
class LinearPCSpec:
    kind: str = "none"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LINEAR_PC_KINDS:
            raise ConfigurationError(f"unknown linear preconditioner {self.kind!r}")


@dataclass
class SolverNode:
    kind: str
    params: dict = field(default_factory=dict)
    children: tuple = ()
    left_pc: "SolverNode | None" = None
    right_pc: "SolverNode | None" = None
    linear_pc: LinearPCSpec | None = None
    sub: "SolverNode | None" = None
    smoother: "SolverNode | None" = None
    coarse: "SolverNode | None" = None
    linesearch: LineSearchConfig | None = None

    def __post_init__(self):
        validate_node(self)

    def replace(self, **kw) -> "SolverNode":
        return replace(self, **kw)


def validate_node(node: SolverNode):
    if node.kind not in SOLVER_KINDS:
        raise ConfigurationError(f"unknown solver kind {node.kind!r}")
    allowed = _ALLOWED[node.kind]
    for key in node.params:
        if key not in allowed:
            raise ConfigurationError(
                f"parameter {key!r} is not valid for solver {node.kind!r}")
    p = node.params
    if "m" in p and int(p["m"]) < 1:
        raise ConfigurationError(f"{node.kind}: history size m must be >= 1")
    if "levels" in p and int(p["levels"]) < 1:
        raise ConfigurationError("fas: levels must be >= 1")
    if "sweeps" in p and int(p["sweeps"]) < 1:
        raise ConfigurationError("gsn: sweeps must be >= 1")
    if "max_block_it" in p and int(p["max_block_it"]) < 1:
        raise ConfigurationError("gsn: max_block_it must be >= 1")
    if "overlap" in p and int(p["overlap"]) < 0:
        raise ConfigurationError("overlap must be >= 0")
    if "max_it" in p and int(p["max_it"]) < 0:
        raise ConfigurationError("max_it must be >= 0")
    if node.kind == "composite":
        ctype = p.get("type", "additive")
        if ctype not in ("additive", "multiplicative"):
            raise ConfigurationError(f"composite type {ctype!r} must be "
                                     "'additive' or 'multiplicative'")
        if len(node.children) < 2:
            raise ConfigurationError("composite needs at least two inner solvers")
    elif node.children:
        raise ConfigurationError(f"{node.kind} takes no positional inner solvers")
    if node.right_pc is not None and node.kind not in ("newton", "anderson",
                                                       "ngmres", "nrich"):
        raise ConfigurationError(
            f"right preconditioning is not defined for {node.kind!r}")
    if node.left_pc is not None:
        if node.kind == "newton" and node.left_pc.kind not in ("nasm", "ras"):
            raise ConfigurationError(
                "newton only supports Schwarz left preconditioners "
                "(the additive Schwarz preconditioned inexact Newton form)")
        if node.kind in ("fas", "nasm", "ras", "gsn", "composite"):
            raise ConfigurationError(
                f"left preconditioning is not defined for {node.kind!r}")
    if node.linear_pc is not None and node.kind != "newton":
        raise ConfigurationError("only newton takes a linear preconditioner")
    if node.sub is not None and node.kind not in ("nasm", "ras"):
        raise ConfigurationError("sub= only applies to nasm/ras")
    if (node.smoother is not None or node.coarse is not None) and node.kind != "fas":
        raise ConfigurationError("smoother=/coarse= only apply to fas")
    if node.linesearch is not None and node.linesearch.kind not in LS_KINDS:
        raise ConfigurationError(f"unknown line search {node.linesearch.kind!r}")


def resolve_convergence(node: SolverNode, role="top") -> ConvergenceParams:
    """Tolerances for a node in a given role.  Inner solvers (preconditioners,
    composite members, smoothers) default to a budget of one iteration and
    never see outer tolerances."""
    p = node.params
    cp = ConvergenceParams()
    cp.max_it = int(p.get("max_it", 50 if role == "top" else 1))
    cp.rtol = float(p.get("rtol", cp.rtol))
    cp.atol = float(p.get("atol", cp.atol))
    return cp


def resolve_linesearch(node: SolverNode) -> LineSearchConfig:
    if node.linesearch is not None:
        cfg = node.linesearch
    else:
        kind = _DEFAULT_LS.get(node.kind, "none")
        cfg = LineSearchConfig(kind=kind)
    if cfg.kind == "cp" and not cfg.carry_lambda:
        # CP conventionally restarts each search from the previously
        # accepted step length
        cfg = cfg.replace(carry_lambda=True)
    if "damping" in node.params:
        cfg = cfg.replace(lambda0=float(node.params["damping"]))
    return cfg


def default_sub_solver() -> SolverNode:
    """One Newton-LU iteration per subdomain, the conventional Schwarz inner
    solve."""
    return SolverNode("newton", params={"max_it": 1},
                      linear_pc=LinearPCSpec("lu"))


def default_fas_smoother() -> SolverNode:
    return SolverNode("gsn", params={"sweeps": 5})


def default_fas_coarse() -> SolverNode:
    return SolverNode("newton", params={"max_it": 5},
                      linear_pc=LinearPCSpec("lu"))


# ---------------------------------------------------------------------------
# canonical text form

def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return f"{v:g}"
    return str(v)


_PARAM_ORDER = ("type", "m", "levels", "sweeps", "max_block_it", "overlap",
                "max_it", "rtol", "atol", "ksp_rtol", "damping")


def to_string(node: SolverNode) -> str:
    """Canonical text form; parse(to_string(node)) reproduces the tree."""
    args = []
    for key in _PARAM_ORDER:
        if key in node.params:
            args.append(f"{key}={_fmt_value(node.params[key])}")
    if node.linesearch is not None:
        args.append(f"ls={node.linesearch.kind}")
    if node.linear_pc is not None:
        pc = node.linear_pc
        if pc.params:
            inner = ",".join(f"{k}={_fmt_value(v)}"
                             for k, v in sorted(pc.params.items()))
            args.append(f"lpc={pc.kind}({inner})")
        else:
            args.append(f"lpc={pc.kind}")
    if node.left_pc is not None:
        args.append(f"lp={to_string(node.left_pc)}")
    if node.right_pc is not None:
        args.append(f"rp={to_string(node.right_pc)}")
    if node.sub is not None:
        args.append(f"sub={to_string(node.sub)}")
    if node.smoother is not None:
        args.append(f"smoother={to_string(node.smoother)}")
    if node.coarse is not None:
        args.append(f"coarse={to_string(node.coarse)}")
    for child in node.children:
        args.append(to_string(child))
    if not args:
        return node.kind
    return f"{node.kind}({','.join(args)})"
