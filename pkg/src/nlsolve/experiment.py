"""Experiment driver: run one (problem, solver) pair and serialize the
outcome.

The record carries everything the benchmark tables report: converged
reason, the counter block (nonlinear/linear iterations, residual and
Jacobian evaluations, preconditioner applications), wall time, and the
per-iteration residual history.  JSON output round-trips back into a
record; CSV carries the history only.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field

import numpy as np

from .config import SolverNode
from .core import ConfigurationError, SolveResult
from .dsl import parse_spec
from .problems import (CavityParams, PLaplacianParams, cavity_initial_guess,
                       make_cavity, make_plaplacian, plap_initial_guess)
from .solvers import build_solver

MONITOR_FMT = "It {it} rnorm {rnorm:.6e}"


@dataclass
class ExperimentRecord:
    problem: str
    params: dict
    solver: str
    reason: str
    counters: dict
    wall_time_s: float
    history: list = field(default_factory=list)
    result: "SolveResult | None" = None   # in-process extra, not serialized

    def __eq__(self, other):
        if not isinstance(other, ExperimentRecord):
            return NotImplemented
        return (self.problem == other.problem and self.params == other.params
                and self.solver == other.solver and self.reason == other.reason
                and self.counters == other.counters
                and self.wall_time_s == other.wall_time_s
                and self.history == other.history)


def build_problem(name: str, params: dict):
    """Problem instance plus its conventional initial guess."""
    if name == "plaplacian":
        p = PLaplacianParams(**params)
        return make_plaplacian(p), plap_initial_guess(p)
    if name == "cavity":
        p = CavityParams(**params)
        return make_cavity(p), cavity_initial_guess(p)
    raise ConfigurationError(
        f"unknown problem {name!r}; choose 'plaplacian' or 'cavity'")


def _counters(stats) -> dict:
    return {"nit": stats.nonlinear_its, "lit": stats.linear_its,
            "func": stats.func_evals, "jac": stats.jac_evals,
            "pc": stats.pc_applies, "npc": stats.npc_applies}


def run_experiment(problem: str, params: dict, solver,
                   monitor: bool = False, stream=None) -> ExperimentRecord:
    """Solve `problem` with `solver` (a SolverNode or spec text) and collect
    the result.  With monitor=True a residual line is streamed per
    iteration in the frozen format."""
    node = solver if isinstance(solver, SolverNode) else parse_spec(solver)
    prob, x0 = build_problem(problem, params)
    stream = sys.stdout if stream is None else stream

    cb = None
    if monitor:
        def cb(it, rnorm):
            print(MONITOR_FMT.format(it=it, rnorm=rnorm), file=stream,
                  flush=True)

    sv = build_solver(node)
    res = sv.solve(prob, x0, monitor=cb)
    from .config import to_string
    return ExperimentRecord(
        problem=problem,
        params=dict(params),
        solver=to_string(node),
        reason=res.reason.name,
        counters=_counters(res.stats),
        wall_time_s=res.stats.wall_time,
        history=[[int(it), float(rn)] for it, rn in res.stats.history],
        result=res)


def emit_results(record: ExperimentRecord, format: str = "json") -> bytes:
    if format == "json":
        doc = {"problem": record.problem, "params": record.params,
               "solver": record.solver, "reason": record.reason,
               "counters": record.counters,
               "wall_time_s": record.wall_time_s,
               "history": record.history}
        return (json.dumps(doc, indent=2) + "\n").encode()
    if format == "csv":
        lines = ["it,rnorm"]
        lines += [f"{it},{rn:.17g}" for it, rn in record.history]
        return ("\n".join(lines) + "\n").encode()
    raise ConfigurationError(f"unknown output format {format!r}")


def record_from_json(data: bytes) -> ExperimentRecord:
    doc = json.loads(data.decode())
    return ExperimentRecord(
        problem=doc["problem"], params=doc["params"], solver=doc["solver"],
        reason=doc["reason"], counters=doc["counters"],
        wall_time_s=doc["wall_time_s"],
        history=[[int(it), float(rn)] for it, rn in doc["history"]])
