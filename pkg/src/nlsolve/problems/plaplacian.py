"""Regularized p-Laplacian with a constant source on the square [-1, 1]^2.

Finite differences on a tensor grid.  Each cell face carries its own
diffusivity eta = (eps^2 + |grad u|^2/2)^((p-2)/2) evaluated at the face
midpoint from the full gradient: the normal component is the one-sided
difference across the face and the transverse component averages the four
surrounding one-sided differences.  The flux divergence at an interior
node is

    F_ij = -hy*(eta_E*ux_E - eta_W*ux_W) - hx*(eta_N*uy_N - eta_S*uy_S)
           - lam*exp(u_ij)*hx*hy

with an optional exponential (Bratu) reaction term.  The right-hand side
is the source strength times the cell area on interior rows.

Walls are homogeneous Dirichlet.  Wall rows stay in the system as
identity rows (residual u_i - 0) so every solver sees one flat vector,
but interior stencils read the imposed wall value, not the state entry.

The Jacobian is assembled analytically on a 9-point stencil, including
the derivative of the face viscosity with respect to the transverse
neighbors.  Its sparsity pattern is symmetric, and for p = 2 the
viscosity is constant so the operator collapses to the 5-point Poisson
stencil and the matrix is exactly symmetric.  For p != 2 the transverse
averages make adjacent faces see slightly different viscosity slopes, so
the assembled matrix is mildly nonsymmetric even though the underlying
PDE operator is self-adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse import csr_matrix

from ..core import ConfigurationError, GridLayout, NonlinearProblem


@dataclass(frozen=True)
class PLaplacianParams:
    p: float = 5.0
    epsilon: float = 1e-5
    source: float = 0.1
    bratu_lambda: float = 0.0
    nx: int = 65
    ny: int = 65

    def __post_init__(self):
        if self.p < 1.0:
            raise ConfigurationError(f"p-Laplacian exponent p={self.p} < 1")
        if self.epsilon <= 0.0:
            raise ConfigurationError("regularization epsilon must be positive")
        if self.nx < 3 or self.ny < 3:
            raise ConfigurationError(
                f"grid {self.nx}x{self.ny} too small; need nx, ny >= 3")


def _geometry(params):
    hx = 2.0 / (params.nx - 1)
    hy = 2.0 / (params.ny - 1)
    return hx, hy, 1.0 / hx, 1.0 / hy


def _clamped(x, params):
    """State on the grid with wall values replaced by the imposed zero."""
    U = x.reshape(params.ny, params.nx).copy()
    U[0, :] = 0.0
    U[-1, :] = 0.0
    U[:, 0] = 0.0
    U[:, -1] = 0.0
    return U


def _face_quantities(U, params):
    """Per-face gradients and viscosities.

    x-faces sit between horizontal neighbors, shape ny x (nx-1); y-faces
    between vertical neighbors, shape (ny-1) x nx.  Transverse rows/columns
    touching the walls are never referenced by interior nodes and are left
    zero.
    """
    hx, hy, dhx, dhy = _geometry(params)
    gx = (U[:, 1:] - U[:, :-1]) * dhx
    gy = (U[1:, :] - U[:-1, :]) * dhy
    tx = np.zeros_like(gx)   # transverse (y) gradient at x-faces
    ty = np.zeros_like(gy)   # transverse (x) gradient at y-faces
    tx[1:-1, :] = 0.25 * dhy * (U[2:, :-1] + U[2:, 1:]
                                - U[:-2, :-1] - U[:-2, 1:])
    ty[:, 1:-1] = 0.25 * dhx * (U[:-1, 2:] + U[1:, 2:]
                                - U[:-1, :-2] - U[1:, :-2])
    e2 = params.epsilon * params.epsilon
    pexp = (params.p - 2.0) / 2.0
    eta_x = (e2 + 0.5 * (gx * gx + tx * tx)) ** pexp
    eta_y = (e2 + 0.5 * (gy * gy + ty * ty)) ** pexp
    return gx, gy, tx, ty, eta_x, eta_y


def plap_f(x, params):
    """F(x) as a flat vector (right-hand side not subtracted)."""
    nx, ny = params.nx, params.ny
    hx, hy, dhx, dhy = _geometry(params)
    hxhy = hx * hy
    U = _clamped(x, params)
    gx, gy, tx, ty, eta_x, eta_y = _face_quantities(U, params)
    fx = eta_x * gx
    fy = eta_y * gy

    F = np.empty((ny, nx))
    F[1:-1, 1:-1] = (-hy * (fx[1:-1, 1:] - fx[1:-1, :-1])
                     - hx * (fy[1:, 1:-1] - fy[:-1, 1:-1]))
    if params.bratu_lambda != 0.0:
        F[1:-1, 1:-1] -= params.bratu_lambda * np.exp(U[1:-1, 1:-1]) * hxhy

    X = x.reshape(ny, nx)
    F[0, :] = X[0, :]
    F[-1, :] = X[-1, :]
    F[:, 0] = X[:, 0]
    F[:, -1] = X[:, -1]
    return F.ravel()


def plap_rhs(params):
    nx, ny = params.nx, params.ny
    hx, hy, _, _ = _geometry(params)
    b = np.zeros((ny, nx))
    b[1:-1, 1:-1] = params.source * hx * hy
    return b.ravel()


def plap_jacobian(x, params):
    """Sparse analytic Jacobian of plap_f on the 9-point stencil."""
    nx, ny = params.nx, params.ny
    hx, hy, dhx, dhy = _geometry(params)
    U = _clamped(x, params)
    gx, gy, tx, ty, eta_x, eta_y = _face_quantities(U, params)
    e2 = params.epsilon * params.epsilon
    pm4 = (params.p - 4.0) / 2.0
    half_pm2 = 0.5 * (params.p - 2.0)
    # deta = d eta / d gamma with gamma = eps^2 + (gn^2 + gt^2)/2
    deta_x = half_pm2 * (e2 + 0.5 * (gx * gx + tx * tx)) ** pm4
    deta_y = half_pm2 * (e2 + 0.5 * (gy * gy + ty * ty)) ** pm4
    lam_x = eta_x + gx * gx * deta_x     # normal conductance, x-faces
    lam_y = eta_y + gy * gy * deta_y
    mu_x = deta_x * gx * tx              # cross coefficient, x-faces
    mu_y = deta_y * gy * ty

    # per interior node, quantities at its four faces
    lamE = lam_x[1:-1, 1:]
    lamW = lam_x[1:-1, :-1]
    lamN = lam_y[1:, 1:-1]
    lamS = lam_y[:-1, 1:-1]
    muE = mu_x[1:-1, 1:]
    muW = mu_x[1:-1, :-1]
    muN = mu_y[1:, 1:-1]
    muS = mu_y[:-1, 1:-1]

    sE = hy * dhx
    sN = hx * dhy

    jj, ii = np.meshgrid(np.arange(1, ny - 1), np.arange(1, nx - 1),
                         indexing="ij")
    rows = (jj * nx + ii).ravel()

    diag = sE * (lamE + lamW) + sN * (lamN + lamS)
    if params.bratu_lambda != 0.0:
        diag = diag - params.bratu_lambda * np.exp(U[1:-1, 1:-1]) * hx * hy

    data = [diag.ravel()]
    out_rows = [rows]
    out_cols = [rows]

    def _couple(mask, offset, vals):
        m = mask.ravel()
        out_rows.append(rows[m])
        out_cols.append(rows[m] + offset)
        data.append(vals.ravel()[m])

    # couplings to wall nodes are dropped: walls are imposed constants
    in_e = ii + 1 < nx - 1
    in_w = ii - 1 > 0
    in_n = jj + 1 < ny - 1
    in_s = jj - 1 > 0
    _couple(in_e, 1, -sE * lamE - 0.25 * (muN - muS))
    _couple(in_w, -1, -sE * lamW + 0.25 * (muN - muS))
    _couple(in_n, nx, -sN * lamN - 0.25 * (muE - muW))
    _couple(in_s, -nx, -sN * lamS + 0.25 * (muE - muW))
    _couple(in_n & in_e, nx + 1, -0.25 * (muE + muN))
    _couple(in_n & in_w, nx - 1, 0.25 * (muW + muN))
    _couple(in_s & in_e, -nx + 1, 0.25 * (muE + muS))
    _couple(in_s & in_w, -nx - 1, -0.25 * (muW + muS))

    bnd = boundary_rows(params)
    out_rows.append(bnd)
    out_cols.append(bnd)
    data.append(np.ones(bnd.size))

    n = nx * ny
    return csr_matrix((np.concatenate(data),
                       (np.concatenate(out_rows), np.concatenate(out_cols))),
                      shape=(n, n))


def boundary_rows(params):
    nx, ny = params.nx, params.ny
    mask = np.zeros((ny, nx), dtype=bool)
    mask[0, :] = mask[-1, :] = True
    mask[:, 0] = mask[:, -1] = True
    return np.flatnonzero(mask.ravel())


def plap_block_residual(params):
    """Per-node residual/Jacobian closure for Gauss-Seidel-Newton sweeps."""
    nx, ny = params.nx, params.ny
    hx, hy, dhx, dhy = _geometry(params)
    hxhy = hx * hy
    e2 = params.epsilon * params.epsilon
    pexp = (params.p - 2.0) / 2.0
    pm4 = (params.p - 4.0) / 2.0
    half_pm2 = 0.5 * (params.p - 2.0)
    lam = params.bratu_lambda

    def read(x, j, i):
        if i == 0 or i == nx - 1 or j == 0 or j == ny - 1:
            return 0.0
        return x[j * nx + i]

    def block(x, k, b):
        j, i = divmod(k, nx)
        if i == 0 or i == nx - 1 or j == 0 or j == ny - 1:
            return (np.array([x[k] - b[k]]), np.array([[1.0]]))
        uc = x[k]
        ue = read(x, j, i + 1)
        uw = read(x, j, i - 1)
        un = read(x, j + 1, i)
        us = read(x, j - 1, i)
        une = read(x, j + 1, i + 1)
        unw = read(x, j + 1, i - 1)
        use = read(x, j - 1, i + 1)
        usw = read(x, j - 1, i - 1)
        ge = (ue - uc) * dhx
        gw = (uc - uw) * dhx
        gn = (un - uc) * dhy
        gs = (uc - us) * dhy
        te = 0.25 * dhy * (un + une - us - use)
        tw = 0.25 * dhy * (unw + un - usw - us)
        tn = 0.25 * dhx * (ue + une - uw - unw)
        ts = 0.25 * dhx * (use + ue - usw - uw)
        ae = e2 + 0.5 * (ge * ge + te * te)
        aw = e2 + 0.5 * (gw * gw + tw * tw)
        an = e2 + 0.5 * (gn * gn + tn * tn)
        as_ = e2 + 0.5 * (gs * gs + ts * ts)
        ee = ae ** pexp
        ew = aw ** pexp
        en = an ** pexp
        es = as_ ** pexp
        F = -hy * (ee * ge - ew * gw) - hx * (en * gn - es * gs)
        le = ee + ge * ge * half_pm2 * ae ** pm4
        lw = ew + gw * gw * half_pm2 * aw ** pm4
        ln = en + gn * gn * half_pm2 * an ** pm4
        ls = es + gs * gs * half_pm2 * as_ ** pm4
        dF = hy * dhx * (le + lw) + hx * dhy * (ln + ls)
        if lam != 0.0:
            F -= lam * np.exp(uc) * hxhy
            dF -= lam * np.exp(uc) * hxhy
        return (np.array([F - b[k]]), np.array([[dF]]))

    return block


def plap_initial_guess(params):
    """u0(x, y) = x*y*(1 - x^2)*(1 - y^2); zero on the walls."""
    xs = np.linspace(-1.0, 1.0, params.nx)
    ys = np.linspace(-1.0, 1.0, params.ny)
    Y, X = np.meshgrid(ys, xs, indexing="ij")
    return (X * Y * (1.0 - X * X) * (1.0 - Y * Y)).ravel()


def make_plaplacian(params=None, **kw) -> NonlinearProblem:
    if params is None:
        params = PLaplacianParams(**kw)
    elif kw:
        params = replace(params, **kw)
    layout = GridLayout(params.nx, params.ny, 1)
    prob = NonlinearProblem(lambda x: plap_f(x, params), layout,
                            b=plap_rhs(params),
                            jac=lambda x: plap_jacobian(x, params),
                            name="plaplacian", symmetric_jacobian=True)
    prob.coarsen_hook = lambda lay: make_plaplacian(
        replace(params, nx=lay.nx, ny=lay.ny))
    prob.block_residual = plap_block_residual(params)
    bnd = boundary_rows(params)
    prob.dirichlet_rows = lambda: bnd
    prob.ksp_rtol_default = 1e-5
    prob.params = {"p": params.p, "epsilon": params.epsilon,
                   "source": params.source,
                   "bratu_lambda": params.bratu_lambda,
                   "nx": params.nx, "ny": params.ny}
    return prob
