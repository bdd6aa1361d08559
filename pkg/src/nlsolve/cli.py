"""Command-line front end.

    nlsolve --problem plaplacian --nx 65 --ny 65 --p 5 \
            --solver "newton(lpc=asm,ls=bt)" --monitor --format json

Solver divergence is a legitimate experimental outcome and exits 0 with
the reason in the emitted record; configuration and parse errors exit 2.
"""

from __future__ import annotations

import argparse
import sys

from .core import ConfigurationError
from .experiment import emit_results, run_experiment
from .presets import PRESETS, get_preset

_PLAP_KEYS = ("nx", "ny", "p", "epsilon", "source", "bratu_lambda")
_CAVITY_KEYS = ("nx", "ny", "grashof", "prandtl", "lid_velocity")
_FLAG_OF = {"bratu_lambda": "--lambda", "lid_velocity": "--lidvelocity"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nlsolve",
        description="Run a composed nonlinear solver on a built-in problem.")
    ap.add_argument("--problem", choices=("plaplacian", "cavity"))
    ap.add_argument("--nx", type=int)
    ap.add_argument("--ny", type=int)
    ap.add_argument("--p", type=float, help="p-Laplacian exponent")
    ap.add_argument("--epsilon", type=float, help="p-Laplacian regularization")
    ap.add_argument("--source", type=float, help="p-Laplacian source strength")
    ap.add_argument("--lambda", dest="bratu_lambda", type=float,
                    help="p-Laplacian Bratu reaction coefficient")
    ap.add_argument("--grashof", type=float, help="cavity Grashof number")
    ap.add_argument("--prandtl", type=float, help="cavity Prandtl number")
    ap.add_argument("--lidvelocity", dest="lid_velocity", type=float,
                    help="cavity lid velocity")
    ap.add_argument("--solver", help="solver spec, e.g. 'newton(lpc=lu,ls=bt)'")
    ap.add_argument("--rtol", type=float)
    ap.add_argument("--atol", type=float)
    ap.add_argument("--max-it", dest="max_it", type=int)
    ap.add_argument("--monitor", action="store_true",
                    help="print 'It <k> rnorm <value>' per iteration")
    ap.add_argument("--out", help="write results to this path")
    ap.add_argument("--format", choices=("json", "csv"),
                    help="result serialization (default json when --out set)")
    ap.add_argument("--preset", help="named scenario; see --list-presets")
    ap.add_argument("--list-presets", action="store_true")
    return ap


def _gather(args, problem: str) -> dict:
    """Problem parameters from flags; rejects flags of the other problem."""
    keys = _PLAP_KEYS if problem == "plaplacian" else _CAVITY_KEYS
    params = {}
    for key in _PLAP_KEYS + _CAVITY_KEYS:
        val = getattr(args, key)
        if val is None:
            continue
        if key not in keys:
            flag = _FLAG_OF.get(key, f"--{key}")
            raise ConfigurationError(
                f"{flag} does not apply to problem {problem!r}")
        params[key] = val
    return params


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)

    if args.list_presets:
        width = max(len(n) for n in PRESETS)
        for name, pre in PRESETS.items():
            print(f"{name:{width}s}  [{pre.problem}]  {pre.note}")
        return 0

    try:
        if args.preset:
            pre = get_preset(args.preset)
            problem = args.problem or pre.problem
            params = dict(pre.problem_params)
            params.update(_gather(args, problem))
            node = pre.node()
        else:
            if not args.problem:
                ap.error("--problem (or --preset) is required")
            if not args.solver:
                ap.error("--solver (or --preset) is required")
            problem = args.problem
            params = _gather(args, problem)
            node = None
        if args.solver:
            from .dsl import parse_spec
            node = parse_spec(args.solver)

        overrides = {k: v for k, v in (("rtol", args.rtol),
                                       ("atol", args.atol),
                                       ("max_it", args.max_it))
                     if v is not None}
        if overrides:
            node = node.replace(params={**node.params, **overrides})

        record = run_experiment(problem, params, node, monitor=args.monitor)
    except ConfigurationError as e:
        print(f"nlsolve: {e}", file=sys.stderr)
        return 2

    fmt = args.format
    if args.out:
        data = emit_results(record, fmt or "json")
        with open(args.out, "wb") as fh:
            fh.write(data)
    elif fmt:
        sys.stdout.buffer.write(emit_results(record, fmt))
        sys.stdout.buffer.flush()

    last = record.history[-1][1] if record.history else float("nan")
    print(f"{record.problem}: {record.reason} after "
          f"{record.counters['nit']} iterations, rnorm {last:.6e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
