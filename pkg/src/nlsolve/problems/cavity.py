"""Velocity-vorticity driven cavity flow with buoyancy.

Four unknowns per grid node, stored in order (u, v, omega, T):
horizontal velocity, vertical velocity, vorticity, temperature.  The
interior equations are 5-point Laplacians in conservation form scaled by
the cell area, first-order upwind convection of omega and T, and central
differences for the vorticity curl and buoyancy gradient terms.

Boundary rows: no-slip velocity on all walls with the lid velocity
entering through the right-hand side on the top wall; vorticity rows tie
omega to the one-sided normal derivative of the tangential velocity;
temperature is held at 0 on the left wall and 1 on the right wall and is
insulated (one-sided zero flux) on top and bottom.  The vertical walls
own the corner nodes.

The per-node 4x4 block residual/Jacobian used by nonlinear Gauss-Seidel
comes in two builds: a plain Python closure and a numba kernel that
sweeps the whole grid natively.  Both implement the same formulas; tests
cross-check them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse import csr_matrix

from ..core import ConfigurationError, GridLayout, NonlinearProblem

try:
    from numba import njit
    _HAVE_NUMBA = True
except ImportError:          # pragma: no cover - numba present in normal installs
    _HAVE_NUMBA = False

    def njit(*a, **kw):
        def wrap(fn):
            return fn
        return wrap if not (len(a) == 1 and callable(a[0])) else a[0]


@dataclass(frozen=True)
class CavityParams:
    grashof: float = 2.0e4
    prandtl: float = 1.0
    lid_velocity: float = 100.0
    nx: int = 49
    ny: int = 49

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ConfigurationError(
                f"grid {self.nx}x{self.ny} too small; need nx, ny >= 3")


def _geometry(params):
    hx = 1.0 / (params.nx - 1)
    hy = 1.0 / (params.ny - 1)
    return hx, hy, float(params.nx - 1), float(params.ny - 1)


def cavity_f(x, params):
    """F(x) flat; the rhs (lid velocity, hot-wall value) is kept separate."""
    nx, ny = params.nx, params.ny
    hx, hy, dhx, dhy = _geometry(params)
    hydhx = hy * dhx
    hxdhy = hx * dhy
    gr, pr = params.grashof, params.prandtl

    S = x.reshape(ny, nx, 4)
    U, V, O, T = S[..., 0], S[..., 1], S[..., 2], S[..., 3]
    F = np.zeros((ny, nx, 4))

    UC, VC, OC, TC = (A[1:-1, 1:-1] for A in (U, V, O, T))
    UW, VW, OW, TW = (A[1:-1, :-2] for A in (U, V, O, T))
    UE, VE, OE, TE = (A[1:-1, 2:] for A in (U, V, O, T))
    US, VS, OS, TS = (A[:-2, 1:-1] for A in (U, V, O, T))
    UN, VN, ON, TN = (A[2:, 1:-1] for A in (U, V, O, T))

    vxp = 0.5 * (UC + np.abs(UC))
    vxm = 0.5 * (UC - np.abs(UC))
    vyp = 0.5 * (VC + np.abs(VC))
    vym = 0.5 * (VC - np.abs(VC))

    F[1:-1, 1:-1, 0] = ((2.0 * UC - UW - UE) * hydhx
                        + (2.0 * UC - US - UN) * hxdhy
                        - 0.5 * (ON - OS) * hx)
    F[1:-1, 1:-1, 1] = ((2.0 * VC - VW - VE) * hydhx
                        + (2.0 * VC - VS - VN) * hxdhy
                        + 0.5 * (OE - OW) * hy)
    F[1:-1, 1:-1, 2] = ((2.0 * OC - OW - OE) * hydhx
                        + (2.0 * OC - OS - ON) * hxdhy
                        + (vxp * (OC - OW) + vxm * (OE - OC)) * hy
                        + (vyp * (OC - OS) + vym * (ON - OC)) * hx
                        - 0.5 * gr * (TE - TW) * hy)
    F[1:-1, 1:-1, 3] = ((2.0 * TC - TW - TE) * hydhx
                        + (2.0 * TC - TS - TN) * hxdhy
                        + pr * ((vxp * (TC - TW) + vxm * (TE - TC)) * hy
                                + (vyp * (TC - TS) + vym * (TN - TC)) * hx))

    # walls, in an order that lets the vertical walls own the corners
    F[0, :, 0] = U[0, :]
    F[0, :, 1] = V[0, :]
    F[0, :, 2] = O[0, :] + (U[1, :] - U[0, :]) * dhy
    F[0, :, 3] = T[0, :] - T[1, :]
    F[-1, :, 0] = U[-1, :]
    F[-1, :, 1] = V[-1, :]
    F[-1, :, 2] = O[-1, :] + (U[-1, :] - U[-2, :]) * dhy
    F[-1, :, 3] = T[-1, :] - T[-2, :]
    F[:, 0, 0] = U[:, 0]
    F[:, 0, 1] = V[:, 0]
    F[:, 0, 2] = O[:, 0] - (V[:, 1] - V[:, 0]) * dhx
    F[:, 0, 3] = T[:, 0]
    F[:, -1, 0] = U[:, -1]
    F[:, -1, 1] = V[:, -1]
    F[:, -1, 2] = O[:, -1] - (V[:, -1] - V[:, -2]) * dhx
    F[:, -1, 3] = T[:, -1]
    return F.ravel()


def cavity_rhs(params):
    nx, ny = params.nx, params.ny
    b = np.zeros((ny, nx, 4))
    b[-1, 1:-1, 0] = params.lid_velocity    # corners belong to the side walls
    b[:, -1, 3] = 1.0                       # hot wall
    return b.ravel()


def cavity_jacobian(x, params):
    nx, ny = params.nx, params.ny
    hx, hy, dhx, dhy = _geometry(params)
    hydhx = hy * dhx
    hxdhy = hx * dhy
    lap = 2.0 * (hydhx + hxdhy)
    gr, pr = params.grashof, params.prandtl

    S = x.reshape(ny, nx, 4)
    U, V, O, T = S[..., 0], S[..., 1], S[..., 2], S[..., 3]
    UC, VC = U[1:-1, 1:-1], V[1:-1, 1:-1]
    OC, TC = O[1:-1, 1:-1], T[1:-1, 1:-1]
    OW, OE = O[1:-1, :-2], O[1:-1, 2:]
    OS, ON = O[:-2, 1:-1], O[2:, 1:-1]
    TW, TE = T[1:-1, :-2], T[1:-1, 2:]
    TS, TN = T[:-2, 1:-1], T[2:, 1:-1]

    vxp = 0.5 * (UC + np.abs(UC))
    vxm = 0.5 * (UC - np.abs(UC))
    vyp = 0.5 * (VC + np.abs(VC))
    vym = 0.5 * (VC - np.abs(VC))
    sx = np.sign(UC)
    sy = np.sign(VC)

    jj, ii = np.meshgrid(np.arange(1, ny - 1), np.arange(1, nx - 1),
                         indexing="ij")
    base = ((jj * nx + ii) * 4).ravel()
    west, east = base - 4, base + 4
    south, north = base - 4 * nx, base + 4 * nx

    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(np.broadcast_to(v, r.shape).ravel()
                    if np.ndim(v) == 0 else np.asarray(v).ravel())

    ones = np.full(base.size, 1.0)

    # u momentum
    add(base, base, lap * ones)
    add(base, west, -hydhx * ones)
    add(base, east, -hydhx * ones)
    add(base, south, -hxdhy * ones)
    add(base, north, -hxdhy * ones)
    add(base, north + 2, -0.5 * hx * ones)
    add(base, south + 2, 0.5 * hx * ones)
    # v momentum
    add(base + 1, base + 1, lap * ones)
    add(base + 1, west + 1, -hydhx * ones)
    add(base + 1, east + 1, -hydhx * ones)
    add(base + 1, south + 1, -hxdhy * ones)
    add(base + 1, north + 1, -hxdhy * ones)
    add(base + 1, east + 2, 0.5 * hy * ones)
    add(base + 1, west + 2, -0.5 * hy * ones)
    # vorticity transport
    add(base + 2, base + 2, lap + np.abs(UC) * hy + np.abs(VC) * hx)
    add(base + 2, west + 2, -hydhx - vxp * hy)
    add(base + 2, east + 2, -hydhx + vxm * hy)
    add(base + 2, south + 2, -hxdhy - vyp * hx)
    add(base + 2, north + 2, -hxdhy + vym * hx)
    add(base + 2, base,
        (0.5 * (1.0 + sx) * (OC - OW) + 0.5 * (1.0 - sx) * (OE - OC)) * hy)
    add(base + 2, base + 1,
        (0.5 * (1.0 + sy) * (OC - OS) + 0.5 * (1.0 - sy) * (ON - OC)) * hx)
    add(base + 2, east + 3, -0.5 * gr * hy * ones)
    add(base + 2, west + 3, 0.5 * gr * hy * ones)
    # temperature transport
    add(base + 3, base + 3, lap + pr * (np.abs(UC) * hy + np.abs(VC) * hx))
    add(base + 3, west + 3, -hydhx - pr * vxp * hy)
    add(base + 3, east + 3, -hydhx + pr * vxm * hy)
    add(base + 3, south + 3, -hxdhy - pr * vyp * hx)
    add(base + 3, north + 3, -hxdhy + pr * vym * hx)
    add(base + 3, base,
        pr * (0.5 * (1.0 + sx) * (TC - TW) + 0.5 * (1.0 - sx) * (TE - TC)) * hy)
    add(base + 3, base + 1,
        pr * (0.5 * (1.0 + sy) * (TC - TS) + 0.5 * (1.0 - sy) * (TN - TC)) * hx)

    # walls; identity plus one-sided couplings on the vorticity and
    # insulated-temperature rows
    jl = np.arange(ny)
    bl = (jl * nx) * 4
    br = (jl * nx + (nx - 1)) * 4
    im = np.arange(1, nx - 1)
    bb = im * 4
    bt = (((ny - 1) * nx) + im) * 4

    for c in (0, 1, 3):
        add(bl + c, bl + c, 1.0)
        add(br + c, br + c, 1.0)
    add(bl + 2, bl + 2, 1.0)
    add(bl + 2, bl + 1, dhx)
    add(bl + 2, bl + 4 + 1, -dhx)
    add(br + 2, br + 2, 1.0)
    add(br + 2, br + 1, -dhx)
    add(br + 2, br - 4 + 1, dhx)
    for c in (0, 1):
        add(bb + c, bb + c, 1.0)
        add(bt + c, bt + c, 1.0)
    add(bb + 2, bb + 2, 1.0)
    add(bb + 2, bb, -dhy)
    add(bb + 2, bb + 4 * nx, dhy)
    add(bt + 2, bt + 2, 1.0)
    add(bt + 2, bt, dhy)
    add(bt + 2, bt - 4 * nx, -dhy)
    add(bb + 3, bb + 3, 1.0)
    add(bb + 3, bb + 4 * nx + 3, -1.0)
    add(bt + 3, bt + 3, 1.0)
    add(bt + 3, bt - 4 * nx + 3, -1.0)

    n = nx * ny * 4
    return csr_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))


def cavity_block_residual(params):
    """Pure-Python per-node 4x4 block residual/Jacobian closure."""
    nx, ny = params.nx, params.ny
    hx, hy, dhx, dhy = _geometry(params)
    hydhx = hy * dhx
    hxdhy = hx * dhy
    lap = 2.0 * (hydhx + hxdhy)
    gr, pr = params.grashof, params.prandtl

    def block(x, k, b):
        j, i = divmod(k, nx)
        base = k * 4
        rb = np.empty(4)
        J = np.zeros((4, 4))
        uC, vC, oC, tC = x[base:base + 4]
        if i == 0 or i == nx - 1:
            step = 4 if i == 0 else -4
            sgn = 1.0 if i == 0 else -1.0
            rb[0] = uC - b[base]
            rb[1] = vC - b[base + 1]
            rb[2] = oC - sgn * (x[base + step + 1] - vC) * dhx - b[base + 2]
            rb[3] = tC - b[base + 3]
            J[0, 0] = J[1, 1] = J[2, 2] = J[3, 3] = 1.0
            J[2, 1] = sgn * dhx
            return rb, J
        if j == 0 or j == ny - 1:
            step = 4 * nx if j == 0 else -4 * nx
            sgn = 1.0 if j == 0 else -1.0
            rb[0] = uC - b[base]
            rb[1] = vC - b[base + 1]
            rb[2] = oC + sgn * (x[base + step] - uC) * dhy - b[base + 2]
            rb[3] = tC - x[base + step + 3] - b[base + 3]
            J[0, 0] = J[1, 1] = J[2, 2] = J[3, 3] = 1.0
            J[2, 0] = -sgn * dhy
            return rb, J

        w, e = base - 4, base + 4
        s, n_ = base - 4 * nx, base + 4 * nx
        uW, uE, uS, uN = x[w], x[e], x[s], x[n_]
        vW, vE, vS, vN = x[w + 1], x[e + 1], x[s + 1], x[n_ + 1]
        oW, oE, oS, oN = x[w + 2], x[e + 2], x[s + 2], x[n_ + 2]
        tW, tE, tS, tN = x[w + 3], x[e + 3], x[s + 3], x[n_ + 3]
        au, av = abs(uC), abs(vC)
        vxp, vxm = 0.5 * (uC + au), 0.5 * (uC - au)
        vyp, vym = 0.5 * (vC + av), 0.5 * (vC - av)
        sx = 0.0 if uC == 0.0 else (1.0 if uC > 0.0 else -1.0)
        sy = 0.0 if vC == 0.0 else (1.0 if vC > 0.0 else -1.0)

        rb[0] = ((2.0 * uC - uW - uE) * hydhx + (2.0 * uC - uS - uN) * hxdhy
                 - 0.5 * (oN - oS) * hx - b[base])
        rb[1] = ((2.0 * vC - vW - vE) * hydhx + (2.0 * vC - vS - vN) * hxdhy
                 + 0.5 * (oE - oW) * hy - b[base + 1])
        rb[2] = ((2.0 * oC - oW - oE) * hydhx + (2.0 * oC - oS - oN) * hxdhy
                 + (vxp * (oC - oW) + vxm * (oE - oC)) * hy
                 + (vyp * (oC - oS) + vym * (oN - oC)) * hx
                 - 0.5 * gr * (tE - tW) * hy - b[base + 2])
        rb[3] = ((2.0 * tC - tW - tE) * hydhx + (2.0 * tC - tS - tN) * hxdhy
                 + pr * ((vxp * (tC - tW) + vxm * (tE - tC)) * hy
                         + (vyp * (tC - tS) + vym * (tN - tC)) * hx)
                 - b[base + 3])

        J[0, 0] = lap
        J[1, 1] = lap
        J[2, 2] = lap + au * hy + av * hx
        J[2, 0] = (0.5 * (1.0 + sx) * (oC - oW)
                   + 0.5 * (1.0 - sx) * (oE - oC)) * hy
        J[2, 1] = (0.5 * (1.0 + sy) * (oC - oS)
                   + 0.5 * (1.0 - sy) * (oN - oC)) * hx
        J[3, 3] = lap + pr * (au * hy + av * hx)
        J[3, 0] = pr * (0.5 * (1.0 + sx) * (tC - tW)
                        + 0.5 * (1.0 - sx) * (tE - tC)) * hy
        J[3, 1] = pr * (0.5 * (1.0 + sy) * (tC - tS)
                        + 0.5 * (1.0 - sy) * (tN - tC)) * hx
        return rb, J

    return block


@njit(cache=True)
def _block4(x, b, j, i, nx, ny, gr, pr, rb, J):
    hx = 1.0 / (nx - 1)
    hy = 1.0 / (ny - 1)
    dhx = float(nx - 1)
    dhy = float(ny - 1)
    hydhx = hy * dhx
    hxdhy = hx * dhy
    lap = 2.0 * (hydhx + hxdhy)
    base = (j * nx + i) * 4
    for a in range(4):
        for c in range(4):
            J[a, c] = 0.0
    uC = x[base]
    vC = x[base + 1]
    oC = x[base + 2]
    tC = x[base + 3]
    if i == 0 or i == nx - 1:
        step = 4 if i == 0 else -4
        sgn = 1.0 if i == 0 else -1.0
        rb[0] = uC - b[base]
        rb[1] = vC - b[base + 1]
        rb[2] = oC - sgn * (x[base + step + 1] - vC) * dhx - b[base + 2]
        rb[3] = tC - b[base + 3]
        J[0, 0] = 1.0
        J[1, 1] = 1.0
        J[2, 2] = 1.0
        J[3, 3] = 1.0
        J[2, 1] = sgn * dhx
        return
    if j == 0 or j == ny - 1:
        step = 4 * nx if j == 0 else -4 * nx
        sgn = 1.0 if j == 0 else -1.0
        rb[0] = uC - b[base]
        rb[1] = vC - b[base + 1]
        rb[2] = oC + sgn * (x[base + step] - uC) * dhy - b[base + 2]
        rb[3] = tC - x[base + step + 3] - b[base + 3]
        J[0, 0] = 1.0
        J[1, 1] = 1.0
        J[2, 2] = 1.0
        J[3, 3] = 1.0
        J[2, 0] = -sgn * dhy
        return

    w = base - 4
    e = base + 4
    s = base - 4 * nx
    n_ = base + 4 * nx
    uW = x[w]
    uE = x[e]
    uS = x[s]
    uN = x[n_]
    vW = x[w + 1]
    vE = x[e + 1]
    vS = x[s + 1]
    vN = x[n_ + 1]
    oW = x[w + 2]
    oE = x[e + 2]
    oS = x[s + 2]
    oN = x[n_ + 2]
    tW = x[w + 3]
    tE = x[e + 3]
    tS = x[s + 3]
    tN = x[n_ + 3]
    au = abs(uC)
    av = abs(vC)
    vxp = 0.5 * (uC + au)
    vxm = 0.5 * (uC - au)
    vyp = 0.5 * (vC + av)
    vym = 0.5 * (vC - av)
    sx = 0.0
    if uC > 0.0:
        sx = 1.0
    elif uC < 0.0:
        sx = -1.0
    sy = 0.0
    if vC > 0.0:
        sy = 1.0
    elif vC < 0.0:
        sy = -1.0

    rb[0] = ((2.0 * uC - uW - uE) * hydhx + (2.0 * uC - uS - uN) * hxdhy
             - 0.5 * (oN - oS) * hx - b[base])
    rb[1] = ((2.0 * vC - vW - vE) * hydhx + (2.0 * vC - vS - vN) * hxdhy
             + 0.5 * (oE - oW) * hy - b[base + 1])
    rb[2] = ((2.0 * oC - oW - oE) * hydhx + (2.0 * oC - oS - oN) * hxdhy
             + (vxp * (oC - oW) + vxm * (oE - oC)) * hy
             + (vyp * (oC - oS) + vym * (oN - oC)) * hx
             - 0.5 * gr * (tE - tW) * hy - b[base + 2])
    rb[3] = ((2.0 * tC - tW - tE) * hydhx + (2.0 * tC - tS - tN) * hxdhy
             + pr * ((vxp * (tC - tW) + vxm * (tE - tC)) * hy
                     + (vyp * (tC - tS) + vym * (tN - tC)) * hx)
             - b[base + 3])

    J[0, 0] = lap
    J[1, 1] = lap
    J[2, 2] = lap + au * hy + av * hx
    J[2, 0] = (0.5 * (1.0 + sx) * (oC - oW) + 0.5 * (1.0 - sx) * (oE - oC)) * hy
    J[2, 1] = (0.5 * (1.0 + sy) * (oC - oS) + 0.5 * (1.0 - sy) * (oN - oC)) * hx
    J[3, 3] = lap + pr * (au * hy + av * hx)
    J[3, 0] = pr * (0.5 * (1.0 + sx) * (tC - tW)
                    + 0.5 * (1.0 - sx) * (tE - tC)) * hy
    J[3, 1] = pr * (0.5 * (1.0 + sy) * (tC - tS)
                    + 0.5 * (1.0 - sy) * (tN - tC)) * hx


@njit(cache=True)
def _solve4(J, rb, delta):
    # J*delta = -rb by Gauss elimination with partial pivoting
    A = np.empty((4, 5))
    for a in range(4):
        for c in range(4):
            A[a, c] = J[a, c]
        A[a, 4] = -rb[a]
    for col in range(4):
        piv = col
        best = abs(A[col, col])
        for a in range(col + 1, 4):
            if abs(A[a, col]) > best:
                best = abs(A[a, col])
                piv = a
        if best == 0.0:
            return False
        if piv != col:
            for c in range(col, 5):
                tmp = A[col, c]
                A[col, c] = A[piv, c]
                A[piv, c] = tmp
        for a in range(col + 1, 4):
            m = A[a, col] / A[col, col]
            if m != 0.0:
                for c in range(col, 5):
                    A[a, c] -= m * A[col, c]
    for a in range(3, -1, -1):
        acc = A[a, 4]
        for c in range(a + 1, 4):
            acc -= A[a, c] * delta[c]
        delta[a] = acc / A[a, a]
        if not np.isfinite(delta[a]):
            return False
    return True


@njit(cache=True)
def _cavity_sweep(x, b, eps, m_b, nx, ny, gr, pr):
    rb = np.empty(4)
    J = np.empty((4, 4))
    delta = np.empty(4)
    skipped = 0
    for j in range(ny):
        for i in range(nx):
            k = j * nx + i
            base = k * 4
            _block4(x, b, j, i, nx, ny, gr, pr, rb, J)
            nb = np.sqrt(rb[0] ** 2 + rb[1] ** 2 + rb[2] ** 2 + rb[3] ** 2)
            if eps[k] < 0.0:
                eps[k] = 1e-12 * nb
            it = 0
            while nb > eps[k] and it < m_b:
                if not _solve4(J, rb, delta):
                    skipped += 1
                    break
                x[base] += delta[0]
                x[base + 1] += delta[1]
                x[base + 2] += delta[2]
                x[base + 3] += delta[3]
                it += 1
                if it < m_b:
                    _block4(x, b, j, i, nx, ny, gr, pr, rb, J)
                    nb = np.sqrt(rb[0] ** 2 + rb[1] ** 2
                                 + rb[2] ** 2 + rb[3] ** 2)
    return skipped


def cavity_fast_sweep(params):
    if not _HAVE_NUMBA:
        return None
    nx, ny = params.nx, params.ny
    gr, pr = float(params.grashof), float(params.prandtl)

    def sweep(x, eps, m_b, b):
        return _cavity_sweep(x, b, eps, int(m_b), nx, ny, gr, pr)

    return sweep


def cavity_initial_guess(params):
    """Zero state apart from a linear hot-wall temperature ramp."""
    nx, ny = params.nx, params.ny
    hx = 1.0 / (nx - 1)
    x = np.zeros((ny, nx, 4))
    if params.grashof > 0.0:
        x[:, :, 3] = np.arange(nx) * hx
    return x.ravel()


def cavity_dirichlet_rows(params):
    # rows whose residual is exactly x_i - b_i: velocity on every wall,
    # temperature on the vertical walls only
    nx, ny = params.nx, params.ny
    mask = np.zeros((ny, nx, 4), dtype=bool)
    for c in (0, 1):
        mask[0, :, c] = mask[-1, :, c] = True
        mask[:, 0, c] = mask[:, -1, c] = True
    mask[:, 0, 3] = mask[:, -1, 3] = True
    return np.flatnonzero(mask.ravel())


def make_cavity(params=None, **kw) -> NonlinearProblem:
    if params is None:
        params = CavityParams(**kw)
    elif kw:
        params = replace(params, **kw)
    layout = GridLayout(params.nx, params.ny, 4)
    prob = NonlinearProblem(lambda x: cavity_f(x, params), layout,
                            b=cavity_rhs(params),
                            jac=lambda x: cavity_jacobian(x, params),
                            name="cavity", symmetric_jacobian=False)
    prob.coarsen_hook = lambda lay: make_cavity(
        replace(params, nx=lay.nx, ny=lay.ny))
    prob.block_residual = cavity_block_residual(params)
    prob.fast_block_sweep = cavity_fast_sweep(params)
    rows = cavity_dirichlet_rows(params)
    prob.dirichlet_rows = lambda: rows
    prob.ksp_rtol_default = 1e-8
    prob.params = {"grashof": params.grashof, "prandtl": params.prandtl,
                   "lid_velocity": params.lid_velocity,
                   "nx": params.nx, "ny": params.ny}
    return prob
