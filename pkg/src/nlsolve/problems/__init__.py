"""Built-in PDE test problems and their structure providers."""

from __future__ import annotations

from ..core import ConfigurationError
from .cavity import CavityParams, cavity_initial_guess, make_cavity
from .plaplacian import (PLaplacianParams, make_plaplacian,
                         plap_initial_guess)

PROBLEM_KINDS = ("plaplacian", "cavity")


def make_problem(kind, params=None, **kw):
    if kind == "plaplacian":
        return make_plaplacian(params, **kw)
    if kind == "cavity":
        return make_cavity(params, **kw)
    raise ConfigurationError(
        f"unknown problem {kind!r}; expected one of {PROBLEM_KINDS}")


def initial_guess(problem_kind, params):
    if problem_kind == "plaplacian":
        return plap_initial_guess(params)
    if problem_kind == "cavity":
        return cavity_initial_guess(params)
    raise ConfigurationError(
        f"unknown problem {problem_kind!r}; expected one of {PROBLEM_KINDS}")


def provide_decompositions(problem, kind, config=None):
    """Blocks, overlapping subdomains, or a grid hierarchy for `problem`.

    config keys: grid (P, Q) and overlap for subdomains; levels for the
    hierarchy.  Omitted keys fall back to the problem's defaults.
    """
    config = config or {}
    if kind == "blocks":
        from ..decomposition import BlockDecomposition
        return BlockDecomposition.from_layout(problem.layout)
    if kind == "subdomains":
        from ..decomposition import build_subdomains
        grid = config.get("grid", problem.subdomain_grid_default)
        overlap = config.get("overlap", problem.subdomain_overlap_default)
        return build_subdomains(problem.layout, grid=grid,
                                overlap=int(overlap))
    if kind == "hierarchy":
        from ..multilevel import build_hierarchy, max_levels
        levels = config.get("levels")
        if levels is None:
            levels = max_levels(problem.layout)
        return build_hierarchy(problem, int(levels))
    raise ConfigurationError(
        f"unknown decomposition kind {kind!r}; "
        "expected blocks, subdomains, or hierarchy")


__all__ = ["PROBLEM_KINDS", "PLaplacianParams", "CavityParams",
           "make_problem", "make_plaplacian", "make_cavity",
           "initial_guess", "provide_decompositions"]
