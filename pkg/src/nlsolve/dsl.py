"""Text form for solver trees.

Grammar:

    spec   := solver
    solver := IDENT [ "(" arg ("," arg)* ")" ]
    arg    := IDENT "=" value | solver
    value  := NUMBER | IDENT | STRING | solver

A bare solver in argument position is a composite member.  Keyed
arguments carry numeric parameters (max_it=30, rtol=1e-8), the line
search (ls=bt), the linear preconditioner (lpc=lu or lpc=sor(omega=1.5)),
and nested solvers (lp=, rp=, sub=, smoother=, coarse=).

Errors report the offending position (1-based character index) and, for
near-miss names, the closest known spelling.  `config.to_string` prints
the canonical form; parsing it reproduces the tree.
"""

from __future__ import annotations

import difflib
import re
from dataclasses import dataclass

from .config import (LINEAR_PC_KINDS, NODE_KEYS, NUMERIC_KEYS, SOLVER_KINDS,
                     LinearPCSpec, SolverNode, to_string)
from .core import ConfigurationError
from .linesearch import KINDS as LS_KINDS
from .linesearch import LineSearchConfig

__all__ = ["ParseError", "parse_spec", "to_string"]


class ParseError(ConfigurationError):
    pass


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>'[^']*'|"[^"]*")
  | (?P<punct>[(),=])
""", re.VERBOSE)

# idents that look like numbers never occur; NUMBER wins on overlap (1e4)


@dataclass(frozen=True)
class _Token:
    kind: str       # number | ident | string | ( ) , = | end
    text: str
    pos: int        # 1-based character position, for error messages


def _tokenize(text):
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(
                f"unexpected character {text[pos]!r} at position {pos + 1}")
        if m.lastgroup != "ws":
            kind = m.lastgroup
            tok = m.group()
            if kind == "punct":
                kind = tok
            elif kind == "string":
                tok = tok[1:-1]
            out.append(_Token(kind, tok, pos + 1))
        pos = m.end()
    out.append(_Token("end", "", len(text) + 1))
    return out


def _suggest(word, options):
    close = difflib.get_close_matches(word, options, n=1)
    return f"; did you mean {close[0]!r}?" if close else ""


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self, ahead=0):
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def take(self):
        tok = self.toks[self.i]
        if tok.kind != "end":
            self.i += 1
        return tok

    def expect(self, kind):
        tok = self.take()
        if tok.kind != kind:
            what = repr(tok.text) if tok.kind != "end" else "end of input"
            raise ParseError(
                f"expected {kind!r} but found {what} at position {tok.pos}")
        return tok

    # ------------------------------------------------------------------

    def solver(self) -> SolverNode:
        tok = self.expect("ident")
        if tok.text not in SOLVER_KINDS:
            raise ParseError(
                f"unknown solver {tok.text!r} at position {tok.pos}"
                + _suggest(tok.text, SOLVER_KINDS))
        build = {"kind": tok.text, "params": {}, "children": []}
        if self.peek().kind == "(":
            self.take()
            while True:
                self.argument(build)
                nxt = self.take()
                if nxt.kind == ")":
                    break
                if nxt.kind != ",":
                    what = repr(nxt.text) if nxt.kind != "end" else "end of input"
                    raise ParseError(f"expected ',' or ')' but found {what} "
                                     f"at position {nxt.pos}")
        try:
            return SolverNode(build["kind"], params=build["params"],
                              children=tuple(build["children"]),
                              left_pc=build.get("lp"),
                              right_pc=build.get("rp"),
                              linear_pc=build.get("lpc"),
                              sub=build.get("sub"),
                              smoother=build.get("smoother"),
                              coarse=build.get("coarse"),
                              linesearch=build.get("ls"))
        except ConfigurationError as err:
            raise ParseError(f"{err} (solver starting at position {tok.pos})")

    def argument(self, build):
        tok = self.peek()
        if tok.kind == "ident" and self.peek(1).kind == "=":
            self.take()
            self.take()
            self.keyed(tok, build)
            return
        build["children"].append(self.solver())

    def keyed(self, key, build):
        name = key.text
        if name not in NODE_KEYS:
            raise ParseError(
                f"unknown parameter {name!r} at position {key.pos}"
                + _suggest(name, NODE_KEYS))
        if name in build["params"] or name in build:
            raise ParseError(
                f"duplicate parameter {name!r} at position {key.pos}")
        if name in ("lp", "rp", "sub", "smoother", "coarse"):
            build[name] = self.solver()
        elif name == "ls":
            tok = self.expect("ident")
            if tok.text not in LS_KINDS:
                raise ParseError(
                    f"unknown line search {tok.text!r} at position {tok.pos}"
                    + _suggest(tok.text, LS_KINDS))
            build["ls"] = LineSearchConfig(kind=tok.text)
        elif name == "lpc":
            build["lpc"] = self.linear_pc()
        elif name == "type":
            tok = self.expect("ident")
            build["params"]["type"] = tok.text
        else:
            build["params"][name] = self.number(name)

    def linear_pc(self) -> LinearPCSpec:
        tok = self.expect("ident")
        if tok.text not in LINEAR_PC_KINDS:
            raise ParseError(
                f"unknown linear preconditioner {tok.text!r} at position "
                f"{tok.pos}" + _suggest(tok.text, LINEAR_PC_KINDS))
        params = {}
        if self.peek().kind == "(":
            self.take()
            while True:
                k = self.expect("ident")
                self.expect("=")
                if self.peek().kind in ("ident", "string"):
                    params[k.text] = self.take().text
                else:
                    params[k.text] = self.number(k.text)
                nxt = self.take()
                if nxt.kind == ")":
                    break
                if nxt.kind != ",":
                    raise ParseError(f"expected ',' or ')' at position {nxt.pos}")
        return LinearPCSpec(tok.text, params)

    def number(self, key):
        tok = self.take()
        if tok.kind != "number":
            what = repr(tok.text) if tok.kind != "end" else "end of input"
            raise ParseError(f"expected a number for {key!r} but found {what} "
                             f"at position {tok.pos}")
        text = tok.text
        if re.fullmatch(r"[+-]?\d+", text):
            return int(text)
        return float(text)


def parse_spec(text: str) -> SolverNode:
    """Parse the text form of a solver tree."""
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty solver specification")
    parser = _Parser(text)
    node = parser.solver()
    trailing = parser.take()
    if trailing.kind != "end":
        raise ParseError(f"unexpected trailing input {trailing.text!r} "
                         f"at position {trailing.pos}")
    return node
