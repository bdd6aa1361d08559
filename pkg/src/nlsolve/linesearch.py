"""Line searches for the nonlinear solvers.

All searches pick a step length lam for the update x + lam*y.  They differ
in what they model:

  bt     backtracking on ||r||^2 with a sufficient-decrease test; needs the
         Jacobian at x for the directional slope, so Newton-type callers only
  cp     secant iteration on the scalar g(lam) = y . r(x + lam*y); exact for
         problems whose residual is a gradient
  l2     secant iteration on d/dlam ||r(x + lam*y)||^2, with the derivative
         estimated from three points (endpoints plus midpoint)
  basic  fixed step lam0 (damping), no residual evaluations
  none   full step

Residual evaluations performed here go through the problem and therefore
show up in the shared stats; outcomes also carry the local count so callers
can audit it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import ConfigurationError, dot

KINDS = ("bt", "cp", "l2", "basic", "none")


@dataclass
class LineSearchConfig:
    kind: str = "bt"
    lambda0: float = 1.0
    alpha: float = 1e-4        # sufficient-decrease parameter for bt
    max_backtracks: int = 10   # cubic backtracks after the quadratic one
    lambda_min: float = 1e-12
    inner_its: int = 1         # secant iterations for cp / l2
    order: int = 1             # cp: 2 switches to a three-point parabolic fit
    carry_lambda: bool = False # start from the previously accepted step
    precond_residual: bool = True  # under left preconditioning, search on the
                                   # preconditioned residual (False: original)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown line search {self.kind!r}")

    def replace(self, **kw) -> "LineSearchConfig":
        return replace(self, **kw)


@dataclass
class LineSearchOutcome:
    lam: float
    succeeded: bool
    func_evals_used: int = 0
    r_new: np.ndarray | None = None   # residual at x + lam*y if evaluated there
    f_new: float | None = None        # ||r_new||^2


def _eval_f(problem, x, y, lam, stats):
    r = problem.residual(x + lam * y, stats)
    return r, float(np.dot(r, r))


def bt_search(problem, x, y, r, j_apply, cfg, stats, lambda0=None):
    """Cubic backtracking with the Armijo test
    ||r(x+lam*y)||^2 <= ||r||^2 + 2*alpha*lam*s,  s = r . (J y).

    The first candidate is lambda0; on rejection one quadratic model step is
    taken, then up to cfg.max_backtracks cubic model steps, each clamped to
    [0.1, 0.5] times the previous candidate.
    """
    if j_apply is None:
        raise ConfigurationError("bt line search needs the Jacobian at x")
    lam0 = cfg.lambda0 if lambda0 is None else lambda0
    s = dot(r, j_apply(y))
    f0 = float(np.dot(r, r))
    if not np.isfinite(s) or s >= 0.0:
        return LineSearchOutcome(0.0, False)

    evals = 0

    def armijo(f, lam):
        return np.isfinite(f) and f <= f0 + 2.0 * cfg.alpha * lam * s

    lam = lam0
    r_t, f_t = _eval_f(problem, x, y, lam, stats)
    evals += 1
    if armijo(f_t, lam):
        return LineSearchOutcome(lam, True, evals, r_t, f_t)
    best = (f_t, lam, r_t) if np.isfinite(f_t) else None

    # quadratic model through f(0), f'(0), f(lam)
    denom = f_t - f0 - 2.0 * s * lam
    if np.isfinite(denom) and denom > 0.0:
        cand = -s * lam * lam / denom
    else:
        cand = 0.5 * lam
    lam_prev, f_prev = lam, f_t
    lam = min(max(cand, 0.1 * lam), 0.5 * lam)

    for _ in range(cfg.max_backtracks + 1):
        r_t, f_t = _eval_f(problem, x, y, lam, stats)
        evals += 1
        if armijo(f_t, lam):
            return LineSearchOutcome(lam, True, evals, r_t, f_t)
        if np.isfinite(f_t) and (best is None or f_t < best[0]):
            best = (f_t, lam, r_t)
        if lam <= cfg.lambda_min:
            break
        # cubic model through f(0), f'(0) and the last two trial points
        cand = 0.5 * lam
        if np.isfinite(f_t) and np.isfinite(f_prev):
            t1 = f_t - f0 - 2.0 * s * lam
            t2 = f_prev - f0 - 2.0 * s * lam_prev
            d = lam - lam_prev
            if d != 0.0 and lam != 0.0 and lam_prev != 0.0:
                a = (t1 / lam**2 - t2 / lam_prev**2) / d
                bb = (-lam_prev * t1 / lam**2 + lam * t2 / lam_prev**2) / d
                if a == 0.0:
                    if bb != 0.0:
                        cand = -s / bb
                else:
                    # t1, t2 model f = ||r||^2, whose slope at 0 is 2s
                    disc = bb * bb - 6.0 * a * s
                    if disc >= 0.0:
                        cand = (-bb + np.sqrt(disc)) / (3.0 * a)
        lam_prev, f_prev = lam, f_t
        lam = min(max(cand, 0.1 * lam), 0.5 * lam)
    # failed search; still report the best point seen if it beat the start,
    # so callers treating the step as best effort can keep the creep
    if best is not None and best[0] < f0:
        f_b, lam_b, r_b = best
        return LineSearchOutcome(lam_b, False, evals, r_b, f_b)
    return LineSearchOutcome(0.0, False, evals)


def cp_search(problem, x, y, r, cfg, stats, lambda0=None):
    """Secant iteration for a root of g(lam) = y . r(x + lam*y), started from
    the pair (0, lambda0).  With cfg.order == 2 each update instead fits a
    parabola through (lam_prev, lam_mid, lam) and takes the root nearest the
    current lam, falling back to the secant step when no real root exists.
    """
    lam = cfg.lambda0 if lambda0 is None else lambda0
    lam_prev = 0.0
    g_prev = dot(y, r)
    evals = 0
    for _ in range(max(1, cfg.inner_its)):
        r_t = problem.residual(x + lam * y, stats)
        evals += 1
        g_curr = dot(y, r_t)
        if not np.isfinite(g_curr):
            return LineSearchOutcome(0.0, False, evals)
        if cfg.order == 2:
            mid = 0.5 * (lam + lam_prev)
            r_m = problem.residual(x + mid * y, stats)
            evals += 1
            g_mid = dot(y, r_m)
            lam_next = _parabola_root((lam_prev, g_prev), (mid, g_mid),
                                      (lam, g_curr))
            if lam_next is None:
                if abs(g_curr - g_prev) < 1e-30:
                    return LineSearchOutcome(lam, False, evals)
                lam_next = lam - g_curr * (lam - lam_prev) / (g_curr - g_prev)
        else:
            if abs(g_curr - g_prev) < 1e-30:
                return LineSearchOutcome(lam, False, evals)
            lam_next = lam - g_curr * (lam - lam_prev) / (g_curr - g_prev)
        lam_prev, g_prev = lam, g_curr
        lam = lam_next
    if not np.isfinite(lam) or lam < 0.0:
        return LineSearchOutcome(0.0, False, evals)
    return LineSearchOutcome(lam, True, evals)


def _parabola_root(p0, p1, p2):
    """Root of the quadratic through three (lam, g) samples nearest p2's lam."""
    (x0, y0), (x1, y1), (x2, y2) = p0, p1, p2
    d01, d02, d12 = x0 - x1, x0 - x2, x1 - x2
    if d01 == 0.0 or d02 == 0.0 or d12 == 0.0:
        return None
    # Lagrange form -> a*lam^2 + b*lam + c
    a = y0 / (d01 * d02) - y1 / (d01 * d12) + y2 / (d02 * d12)
    b = (-y0 * (x1 + x2) / (d01 * d02)
         + y1 * (x0 + x2) / (d01 * d12)
         - y2 * (x0 + x1) / (d02 * d12))
    c = (y0 * x1 * x2 / (d01 * d02)
         - y1 * x0 * x2 / (d01 * d12)
         + y2 * x0 * x1 / (d02 * d12))
    if a == 0.0:
        if b == 0.0:
            return None
        return -c / b
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return None
    sq = np.sqrt(disc)
    roots = ((-b + sq) / (2 * a), (-b - sq) / (2 * a))
    return min(roots, key=lambda t: abs(t - x2))


def l2_search(problem, x, y, r, cfg, stats, lambda0=None):
    """Secant iteration on the derivative of f(lam) = ||r(x + lam*y)||^2.

    The derivatives at the bracket ends are estimated with three-point
    formulas using f at lam, lam_prev and their midpoint, which costs two
    residual evaluations per iteration and is exact for quadratic f, so an
    affine residual is minimized in a single step.
    """
    lam = cfg.lambda0 if lambda0 is None else lambda0
    lam_prev = 0.0
    f_prev = float(np.dot(r, r))
    evals = 0
    for _ in range(max(1, cfg.inner_its)):
        delta = lam - lam_prev
        if delta == 0.0:
            return LineSearchOutcome(lam, False, evals)
        _, f_curr = _eval_f(problem, x, y, lam, stats)
        _, f_mid = _eval_f(problem, x, y, 0.5 * (lam + lam_prev), stats)
        evals += 2
        if not (np.isfinite(f_curr) and np.isfinite(f_mid)):
            return LineSearchOutcome(0.0, False, evals)
        gp_curr = (3.0 * f_curr - 4.0 * f_mid + f_prev) / delta
        gp_prev = (-f_curr + 4.0 * f_mid - 3.0 * f_prev) / delta
        if abs(gp_curr - gp_prev) < 1e-30:
            return LineSearchOutcome(lam, False, evals)
        lam_next = lam - gp_curr * delta / (gp_curr - gp_prev)
        if not np.isfinite(lam_next) or lam_next <= 0.0:
            # the 1-d model put the minimizer behind the start; halve the
            # step instead so the caller still moves forward
            lam_next = 0.5 * lam
        lam_prev, f_prev = lam, f_curr
        lam = lam_next
    if not np.isfinite(lam) or lam < 0.0:
        return LineSearchOutcome(0.0, False, evals)
    return LineSearchOutcome(lam, True, evals)


def basic_search(cfg, lambda0=None):
    return LineSearchOutcome(cfg.lambda0 if lambda0 is None else lambda0, True)


def run_linesearch(cfg, problem, x, y, r, stats, j_apply=None, lambda0=None):
    if cfg.kind == "none":
        return LineSearchOutcome(1.0, True)
    if cfg.kind == "basic":
        return basic_search(cfg, lambda0)
    if cfg.kind == "bt":
        return bt_search(problem, x, y, r, j_apply, cfg, stats, lambda0)
    if cfg.kind == "cp":
        return cp_search(problem, x, y, r, cfg, stats, lambda0)
    if cfg.kind == "l2":
        return l2_search(problem, x, y, r, cfg, stats, lambda0)
    raise ConfigurationError(f"unknown line search {cfg.kind!r}")
