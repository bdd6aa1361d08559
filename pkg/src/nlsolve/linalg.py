"""Sparse linear algebra kernels: CSR utilities, LU, restarted GMRES, SOR,
and minimum-norm least squares.

GMRES is written out rather than taken from scipy so that iteration and
preconditioner-application counters, the preconditioning side, and
matrix-free operators (needed by the Schwarz-preconditioned Newton
variants) are all under explicit control.
"""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numba import njit

from .core import SingularMatrixError, norm2


def as_csr(A) -> sp.csr_matrix:
    """Canonical CSR: duplicates summed, column indices strictly increasing."""
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def is_symmetric(A, tol=1e-12) -> bool:
    A = as_csr(A)
    d = (A - A.T).tocoo()
    if d.nnz == 0:
        return True
    scale = max(np.max(np.abs(A.data)) if A.nnz else 0.0, 1e-300)
    return float(np.max(np.abs(d.data))) <= tol * scale


def spmv(A, x: np.ndarray) -> np.ndarray:
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"spmv shape mismatch: {A.shape} @ {x.shape}")
    return A @ x


# ---------------------------------------------------------------------------
# sparse LU

class LUFactors:
    """Wrapper over a SuperLU factorization with zero-pivot detection."""

    def __init__(self, lu, n, perm_r, pivot_floor):
        self._lu = lu
        self.n = n
        udiag = lu.U.diagonal()
        bad = np.where(~np.isfinite(udiag) | (np.abs(udiag) <= pivot_floor))[0]
        if bad.size:
            # map the offending pivot back to the original row ordering
            k = int(bad[0])
            row = int(np.where(perm_r == k)[0][0]) if perm_r is not None else k
            raise SingularMatrixError(row=row)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if rhs.shape[0] != self.n:
            raise ValueError(f"rhs length {rhs.shape[0]} != {self.n}")
        return self._lu.solve(rhs)


def sparse_lu(A, ordering="natural") -> LUFactors:
    """Factor A = LU with partial pivoting.

    Only exact zero or non-finite pivots are treated as singular; small
    pivots are allowed since badly row-scaled but solvable systems are
    routine here (degenerate diffusion limits).
    """
    A = as_csr(A)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"cannot factor non-square matrix {A.shape}")
    maxabs = float(np.max(np.abs(A.data))) if A.nnz else 0.0
    row_nnz = np.diff(A.indptr)
    empty = np.where(row_nnz == 0)[0]
    if maxabs == 0.0 or empty.size:
        raise SingularMatrixError(row=int(empty[0]) if empty.size else 0)
    permc = {"natural": "NATURAL", "colamd": "COLAMD"}[ordering]
    try:
        lu = spla.splu(A.tocsc(), permc_spec=permc,
                       options={"SymmetricMode": False})
    except RuntimeError as exc:
        raise SingularMatrixError(detail=str(exc)) from exc
    return LUFactors(lu, n, lu.perm_r, 0.0)


def lu_solve(factors: LUFactors, rhs: np.ndarray) -> np.ndarray:
    return factors.solve(rhs)


# ---------------------------------------------------------------------------
# SOR / Gauss-Seidel

@njit(cache=True)
def _sor_pass(indptr, indices, data, b, x, omega, reverse):
    n = b.shape[0]
    start, stop, step = (n - 1, -1, -1) if reverse else (0, n, 1)
    for row in range(start, stop, step):
        acc = 0.0
        diag = 0.0
        for k in range(indptr[row], indptr[row + 1]):
            col = indices[k]
            v = data[k]
            acc += v * x[col]
            if col == row:
                diag = v
        if diag == 0.0:
            return row
        x[row] += omega * (b[row] - acc) / diag
    return -1


def sor_sweep(A, b, x, omega=1.0, sweeps=1, symmetric=False) -> np.ndarray:
    """Natural-order SOR sweeps on A x = b starting from x; returns new x.

    omega=1 is Gauss-Seidel; symmetric=True runs forward then backward per
    sweep.  The row sum includes the diagonal, so the update is the classic
    x_i += omega * (b_i - (A x)_i) / a_ii with freshest neighbor values.
    """
    A = as_csr(A)
    x = np.array(x, dtype=float)
    b = np.asarray(b, dtype=float)
    for _ in range(sweeps):
        bad = _sor_pass(A.indptr, A.indices, A.data, b, x, omega, False)
        if bad >= 0:
            raise SingularMatrixError(row=int(bad))
        if symmetric:
            bad = _sor_pass(A.indptr, A.indices, A.data, b, x, omega, True)
            if bad >= 0:
                raise SingularMatrixError(row=int(bad))
    return x


# ---------------------------------------------------------------------------
# GMRES

class KrylovConfig:
    def __init__(self, rtol=1e-5, atol=1e-50, restart=30, max_it=500,
                 side="left"):
        if side not in ("left", "right"):
            raise ValueError(f"unknown preconditioning side {side!r}")
        self.rtol = rtol
        self.atol = atol
        self.restart = restart
        self.max_it = max_it
        self.side = side


def _as_operator(A):
    if callable(A):
        return A
    M = as_csr(A)
    return lambda v: M @ v


def gmres(A, b, x0=None, config=None, M=None, stats=None):
    """Restarted GMRES with modified Gram-Schmidt and optional left or right
    preconditioning.  Returns (x, converged, iterations).

    A is a sparse matrix or a callable v -> A v.  M, if given, applies the
    preconditioner inverse (v -> M^{-1} v); every application bumps
    stats.pc_applies and every Arnoldi step bumps stats.linear_its.
    Orthogonalization runs a second Gram-Schmidt pass whenever the first one
    removes more than a factor 1e3 of the vector norm.
    """
    cfg = config or KrylovConfig()
    apply_A = _as_operator(A)
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)

    def apply_M(v):
        if M is None:
            return v
        if stats is not None:
            stats.pc_applies += 1
        return M(v)

    left = cfg.side == "left" and M is not None
    total_its = 0

    r = b - apply_A(x) if (x0 is not None and np.any(x)) else b.copy()
    if left:
        r = apply_M(r)
    rnorm0 = norm2(r)
    if rnorm0 <= cfg.atol:
        return x, True, 0
    target = max(cfg.rtol * rnorm0, cfg.atol)

    while total_its < cfg.max_it:
        beta = norm2(r)
        if beta <= target:
            return x, True, total_its
        m = cfg.restart
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        V[0] = r / beta
        g[0] = beta
        j = 0
        while j < m and total_its < cfg.max_it:
            if cfg.side == "right" and M is not None:
                w = apply_A(apply_M(V[j]))
            elif left:
                w = apply_M(apply_A(V[j]))
            else:
                w = apply_A(V[j])
            wnorm_before = norm2(w)
            for i in range(j + 1):
                hij = float(np.dot(V[i], w))
                H[i, j] = hij
                w = w - hij * V[i]
            if norm2(w) < 1e-3 * wnorm_before:
                for i in range(j + 1):
                    corr = float(np.dot(V[i], w))
                    H[i, j] += corr
                    w = w - corr * V[i]
            hsub = norm2(w)
            H[j + 1, j] = hsub

            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            if denom == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]

            total_its += 1
            if stats is not None:
                stats.linear_its += 1
            j += 1
            if abs(g[j]) <= target or hsub == 0.0:
                break
            V[j] = w / hsub

        y = np.linalg.solve(H[:j, :j], g[:j]) if j else np.zeros(0)
        update = V[:j].T @ y
        if cfg.side == "right" and M is not None:
            update = apply_M(update)
        x = x + update

        r = b - apply_A(x)
        if left:
            r = apply_M(r)
        if norm2(r) <= target:
            return x, True, total_its
    return x, norm2(r) <= target, total_its


# ---------------------------------------------------------------------------
# minimum-norm least squares

def least_squares_minnorm(columns, target, sigma_rtol=1e-10):
    """Minimum-norm solution of min ||C w - target|| over w, where C stacks
    `columns`.  Singular values below sigma_rtol * sigma_max are truncated.
    Returns (weights, rank).
    """
    cols = list(columns)
    if not cols:
        return np.zeros(0), 0
    C = np.column_stack(cols)
    w, _, rank, _ = np.linalg.lstsq(C, np.asarray(target, dtype=float),
                                    rcond=sigma_rtol)
    return w, int(rank)


# ---------------------------------------------------------------------------
# matrix dumps

def write_matrix_market(A, path):
    """Dump a sparse matrix in MatrixMarket coordinate format to `path`."""
    A = sp.coo_matrix(A)
    with open(path, "wb") as fh:
        scipy.io.mmwrite(fh, A)
