"""Named solver/problem configurations for the benchmark scenarios.

Each preset bundles a problem, its parameters, and a solver tree so a
scenario can be rerun from the command line by name alone.  Most solver
trees are given in the text form; the ASPIN preset needs a line-search
parameter the text form does not carry, so it patches the parsed tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import SolverNode
from .core import ConfigurationError
from .dsl import parse_spec
from .linesearch import LineSearchConfig

CAVITY_49 = {"nx": 49, "ny": 49, "prandtl": 1.0, "lid_velocity": 100.0}
PLAP_65 = {"nx": 65, "ny": 65, "p": 5.0, "epsilon": 1e-5, "source": 0.1}

# the weakly damped subdomain sweep shared by the qn and nrich presets;
# one damped Newton-LU step per box keeps the sweep smooth enough for the
# secant searches while leaving the acceleration wrappers real work to do
_RAS_DAMPED = "ras(sub=newton(lpc=lu,ls=basic,max_it=1,damping=0.7))"


def _aspin_node() -> SolverNode:
    # one undamped Newton-LU step per box so the cached factors match the
    # outer state; the l2 search starts long (lambda0=2) because the
    # approximate Jacobian understates the step far from the solution
    node = parse_spec(
        "newton(lp=ras(sub=newton(lpc=lu,ls=basic,max_it=1)),"
        "ksp_rtol=1e-3,rtol=1e-8,max_it=25)")
    return node.replace(
        linesearch=LineSearchConfig(kind="l2", inner_its=2, lambda0=2.0))


@dataclass(frozen=True)
class Preset:
    name: str
    problem: str
    problem_params: dict
    spec: "str | None" = None
    node_factory: "object | None" = None
    note: str = ""

    def node(self) -> SolverNode:
        if self.node_factory is not None:
            return self.node_factory()
        return parse_spec(self.spec)


_ALL = [
    Preset("cavity-gr1e4-newton", "cavity",
           dict(CAVITY_49, grashof=1e4),
           spec="newton(lpc=lu,ls=bt,rtol=1e-8,max_it=30)",
           note="converges in ~8 iterations"),
    Preset("cavity-gr5e4-newton-lu", "cavity",
           dict(CAVITY_49, grashof=5e4),
           spec="newton(lpc=lu,ls=bt,rtol=1e-8,max_it=30)",
           note="stalls near 580 from 1228.95; line search gives out"),
    Preset("cavity-gr5e4-fas-gsn", "cavity",
           dict(CAVITY_49, grashof=5e4),
           spec="fas(levels=2,smoother=gsn(sweeps=6),"
                "coarse=newton(lpc=lu,max_it=5),max_it=25,rtol=1e-8)",
           note="oscillates without converging"),
    Preset("cavity-gr5e4-anderson-fas-gsn", "cavity",
           dict(CAVITY_49, grashof=5e4),
           spec="anderson(m=30,rp=fas(levels=2,smoother=gsn(sweeps=6),"
                "coarse=newton(lpc=lu,max_it=5),max_it=2),max_it=30,rtol=1e-8)",
           note="Anderson-wrapped FAS, converges in ~20 iterations"),
    Preset("cavity-gr5e4-anderson-fas-newton", "cavity",
           dict(CAVITY_49, grashof=5e4),
           spec="anderson(m=30,rp=fas(levels=4,smoother=newton(lpc=lu,"
                "max_it=6),coarse=newton(lpc=lu,max_it=5)),max_it=10,"
                "rtol=1e-8)",
           note="Newton smoothers inside FAS, converges in a few iterations"),
    Preset("plap-newton-asm", "plaplacian", dict(PLAP_65),
           spec="newton(lpc=asm,ls=bt,rtol=1e-8,max_it=200)",
           note="single-solver baseline, ~35 iterations"),
    Preset("plap-ras-newton-asm", "plaplacian", dict(PLAP_65),
           spec="composite(type=multiplicative,"
                "ras(sub=newton(lpc=lu,rtol=1e-3,max_it=20)),"
                "newton(lpc=asm,ls=bt),rtol=1e-8,max_it=100)",
           note="Schwarz sweep then Newton each iteration, ~6 outer"),
    Preset("plap-qn-ras", "plaplacian", dict(PLAP_65),
           spec=f"qn(lp={_RAS_DAMPED},ls=cp,m=10,rtol=1e-8,max_it=500)",
           note="L-BFGS on the Schwarz-preconditioned residual, ~28"),
    Preset("plap-nrich-ras", "plaplacian", dict(PLAP_65),
           spec=f"nrich(lp={_RAS_DAMPED},rtol=1e-8,max_it=500)",
           note="Richardson on the same residual, far more iterations"),
    Preset("plap-aspin", "plaplacian", dict(PLAP_65),
           node_factory=_aspin_node,
           note="Newton on the Schwarz residual with the approximate "
                "Jacobian; l2 search with 2 inner steps, lambda0=2"),
]

PRESETS = {p.name: p for p in _ALL}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise ConfigurationError(
            f"unknown preset {name!r}; known presets: {known}") from None
