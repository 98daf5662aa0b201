"""Sparse matrices and Krylov solvers.

Matrices are :class:`scipy.sparse.csr_matrix` with sorted, duplicate-free
column indices. The solvers are plain numpy implementations so that the
stopping test is always the true relative residual ``||b - Ax|| / ||b||``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgumentError, SolverError

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12


@dataclass
class SolverReport:
    iterations: int
    final_residual: float
    converged: bool


def csr(A):
    """Canonical CSR copy of ``A`` (sorted indices, summed duplicates)."""
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    if np.isnan(A.data).any():
        raise InvalidArgumentError("matrix has NaN entries")
    return A


def jacobi(A):
    """Diagonal-scaling preconditioner."""
    d = A.diagonal().copy()
    d[d == 0.0] = 1.0
    inv = 1.0 / d
    return lambda r: inv * r


def factorized(A, diagonal_pivots=False):
    """Preconditioner applying a sparse LU factorisation of ``A``.

    Used for operators that stay fixed over a run; wrapped in a Krylov loop it
    converges in one or two iterations. ``diagonal_pivots`` keeps the
    symmetric fill-reducing order (no row pivoting), which suits
    saddle-point matrices with a zero block.
    """
    # minimum-degree ordering on A^T + A suits the structurally symmetric FEM operators
    kw = dict(diag_pivot_thresh=0.0, options=dict(SymmetricMode=True)) if diagonal_pivots else {}
    lu = spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A", **kw)
    return lu.solve


def _check(A, b):
    n, m = A.shape
    if n != m:
        raise InvalidArgumentError(f"matrix must be square, got {A.shape}")
    b = np.asarray(b, dtype=float)
    if b.shape != (n,):
        raise InvalidArgumentError(f"rhs has shape {b.shape}, expected ({n},)")
    return b


def _fail(name, report):
    raise SolverError(
        f"{name} did not converge: residual {report.final_residual:.3e} "
        f"after {report.iterations} iterations",
        report,
    )


def solve_spd(A, b, tol=DEFAULT_TOL, maxit=None, x0=None, precond=None):
    """Preconditioned conjugate gradients.

    Parameters
    ----------
    A : sparse matrix
        Symmetric positive definite (after constraints are applied).
    b : ndarray
    tol : float
        Relative residual target.
    maxit : int, optional
        Defaults to ten times the number of unknowns.
    x0 : ndarray, optional
    precond : callable, optional
        ``z = precond(r)``; Jacobi when omitted.

    Returns
    -------
    x, SolverReport
    """
    b = _check(A, b)
    n = len(b)
    maxit = 10 * n if maxit is None else maxit
    M = jacobi(A) if precond is None else precond
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolverReport(0, 0.0, True)

    if x0 is None:
        x, r = np.zeros(n), b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - A @ x
    res = np.linalg.norm(r) / bnorm
    it = 0
    while res > tol and it < maxit:
        # restart from the true residual whenever the recurrence claims convergence
        z = M(r)
        p = z.copy()
        rz = r @ z
        while it < maxit:
            Ap = A @ p
            pAp = p @ Ap
            if pAp <= 0.0:
                break
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            it += 1
            if np.linalg.norm(r) <= tol * bnorm:
                break
            z = M(r)
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        r = b - A @ x
        new_res = np.linalg.norm(r) / bnorm
        if new_res >= res and new_res > tol:
            res = new_res
            break
        res = new_res

    report = SolverReport(it, float(res), bool(res <= tol))
    if not report.converged:
        _fail("conjugate gradients", report)
    return x, report


def solve_general(A, b, tol=DEFAULT_TOL, maxit=None, x0=None, precond=None):
    """Right-preconditioned BiCGStab for nonsymmetric systems.

    Same contract as :func:`solve_spd`.
    """
    b = _check(A, b)
    n = len(b)
    maxit = 10 * n if maxit is None else maxit
    M = jacobi(A) if precond is None else precond
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolverReport(0, 0.0, True)

    if x0 is None:
        x, r = np.zeros(n), b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - A @ x
    res = np.linalg.norm(r) / bnorm
    it = 0
    stalls = 0
    while res > tol and it < maxit:
        rhat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros(n)
        p = np.zeros(n)
        while it < maxit:
            rho_new = rhat @ r
            if rho_new == 0.0 or omega == 0.0:
                break
            beta = (rho_new / rho) * (alpha / omega)
            rho = rho_new
            p = r + beta * (p - omega * v)
            phat = M(p)
            v = A @ phat
            denom = rhat @ v
            if denom == 0.0:
                break
            alpha = rho / denom
            s = r - alpha * v
            it += 1
            if np.linalg.norm(s) <= tol * bnorm:
                x += alpha * phat
                r = s
                break
            shat = M(s)
            t = A @ shat
            tt = t @ t
            omega = (t @ s) / tt if tt > 0.0 else 0.0
            x += alpha * phat + omega * shat
            r = s - omega * t
            if np.linalg.norm(r) <= tol * bnorm:
                break
        r = b - A @ x
        new_res = np.linalg.norm(r) / bnorm
        if new_res >= res and new_res > tol:
            stalls += 1
            if stalls > 3:
                res = new_res
                break
        res = new_res

    report = SolverReport(it, float(res), bool(res <= tol))
    if not report.converged:
        _fail("BiCGStab", report)
    return x, report
