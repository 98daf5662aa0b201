"""Log-conformation update.

Each component ``(xx, xy, yy)`` of ``psi`` carries mass/dt plus kappa-stiffness
(the operator ``D``), and the rotation term ``Omega psi - psi Omega`` couples
them through the ``omega``-weighted mass matrix ``W``:

    D X - 2 W Y = f0,   W X + D Y - W Z = f1,   2 W Y + D Z = f2.

The system is solved in the equivalent variables ``T = X + Z``, ``a = X - Z``,
``y = 2 Y``: the trace obeys ``D T = f0 + f2`` and the anisotropic part
``[[D, -2W], [2W, D]] (a, y) = (f0 - f2, 2 f1)``, the real form of
``(D + 2iW)(a + iy)``. Near-isotropic conformations make ``omega`` very large;
in these variables ``W`` only ever multiplies the small anisotropic part, so
the residual test is not swamped by the cancellation ``W X - W Z``.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from . import fem
from . import tensor2 as t2
from .linalg import DEFAULT_TOL, SolverReport, factorized, solve_general, solve_spd
from .transport import sample_at_departure

IDENTITY = np.array([1.0, 0.0, 1.0])

# dt * max|omega| above which the complex operator is factorised each step
COUPLED_FACTOR_THRESHOLD = 0.5


class RotationSamples(NamedTuple):
    omega: np.ndarray  # (nt, nq)
    b: np.ndarray      # (nt, nq, 3)


def nodal(field):
    """Tensor field dofs as an ``(n_scalar, 3)`` array."""
    return np.stack(field.components(), axis=-1)


def from_nodal(space, a):
    return fem.Field(space, np.ascontiguousarray(a.T).ravel())


def velocity_gradient_qp(disc, u):
    """``grad u`` at quadrature points, ``[..., i, j] = d u_i / d x_j``."""
    return np.stack([disc.qp_gradients(c) for c in u.components()], axis=-2)


def build_rotation_samples(disc, u, psi):
    """``omega`` and ``B`` at quadrature points from ``grad u`` and ``exp(psi)``."""
    sigma = t2.exp_sym2(disc.field_at_qp(psi))
    dec = t2.decompose_grad(velocity_gradient_qp(disc, u), sigma)
    return RotationSamples(dec.omega, dec.b)


def sigma_from_psi(psi):
    """Nodal interpolant of ``exp(psi)``."""
    return from_nodal(psi.space, t2.exp_sym2(nodal(psi)))


def _diagonal_operator(disc, dt, kappa):
    def build():
        D = disc.assemble(fem.mass_kernel(disc) / dt + kappa * fem.stiffness_kernel(disc))
        return D, factorized(D)
    return disc.cached(("psi_diag", dt, kappa), build)


def _pair_preconditioner(solve_d, n):
    """Block-diagonal ``D`` solves for the anisotropic pair."""
    def apply(r):
        return solve_d(r.reshape(2, n).T).T.ravel()
    return apply


def _complex_preconditioner(D, W):
    """Exact inverse of ``[[D, -2W], [2W, D]]`` through ``D + 2iW``."""
    n = D.shape[0]
    solve_z = factorized(D + 2j * W)

    def apply(r):
        z = solve_z(r[:n] + 1j * r[n:])
        return np.concatenate([z.real, z.imag])
    return apply


class _PairTemplate:
    """Scatter map from ``D`` and ``W`` data (shared pattern) to ``[[D, -2W], [2W, D]]``."""

    def __init__(self, pattern):
        nnz = pattern.nnz
        ids = np.arange(1, nnz + 1, dtype=float)
        big = sp.bmat([[pattern.matrix(ids), pattern.matrix(ids + nnz)],
                       [pattern.matrix(ids + 2 * nnz), pattern.matrix(ids + 3 * nnz)]],
                      format="csr")
        big.sort_indices()
        code = big.data.astype(np.int64) - 1
        block, slot = code // nnz, code % nnz
        # blocks 0 and 3 read D, blocks 1 and 2 read W
        self.source = slot + nnz * np.isin(block, (1, 2))
        self.coef = np.array([1.0, -2.0, 2.0, 1.0])[block]
        self.indices, self.indptr, self.shape = big.indices, big.indptr, big.shape

    def matrix(self, d_data, w_data):
        data = self.coef * np.concatenate([d_data, w_data])[self.source]
        return sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)


def anisotropic_operator(disc, D, w_data):
    """``[[D, -2W], [2W, D]]`` with ``W`` given by its data on the P2 pattern."""
    tmpl = disc.cached("psi_pair_template", lambda: _PairTemplate(disc.pattern(2, 2)))
    return tmpl.matrix(D.data, w_data)


def step_psi(disc, psi, u, dep, Wi, kappa, dt, samples=None, tol=DEFAULT_TOL):
    """One implicit step of the log-conformation equation.

    Parameters
    ----------
    disc : Discretization
    psi : Field
        ``psi^n`` in the P2 tensor space.
    u : Field
        ``u^n``; used for ``Omega`` and ``B``.
    dep : DepartureSet
        Characteristic feet built from ``u^n`` and ``dt``.
    Wi, kappa, dt : float
    samples : RotationSamples, optional
        Precomputed ``omega`` and ``B``.

    Returns
    -------
    psi_new : Field
    report : SolverReport
    """
    if samples is None:
        samples = build_rotation_samples(disc, u, psi)
    D, solve_d = _diagonal_operator(disc, dt, kappa)
    n = D.shape[0]
    pattern = disc.pattern(2, 2)
    w_data = pattern.data(fem.mass_kernel(disc, coef=samples.omega))

    P2 = disc.P2
    M = disc.mass()
    transported = sample_at_departure(psi, dep)
    relax = t2.exp_sym2(-nodal(psi)) - IDENTITY
    f = []
    for c in range(3):
        load = transported[..., c] / dt + 2.0 * samples.b[..., c]
        b = fem.assemble_vector(P2, fem.load_kernel(disc, load))
        f.append(b + (M @ relax[:, c]) / Wi)

    xx, xy, yy = psi.components()
    trace, rep_t = solve_spd(D, f[0] + f[2], tol=tol, x0=xx + yy, precond=solve_d)
    if dt * np.abs(samples.omega).max(initial=0.0) > COUPLED_FACTOR_THRESHOLD:
        pc = _complex_preconditioner(D, pattern.matrix(w_data))
    else:
        pc = _pair_preconditioner(solve_d, n)
    ay, rep_a = solve_general(anisotropic_operator(disc, D, w_data), np.concatenate([f[0] - f[2], 2.0 * f[1]]),
                              tol=tol, x0=np.concatenate([xx - yy, 2.0 * xy]), precond=pc)
    a, y = ay[:n], ay[n:]
    values = np.concatenate([0.5 * (trace + a), 0.5 * y, 0.5 * (trace - a)])
    report = SolverReport(rep_t.iterations + rep_a.iterations,
                          max(rep_t.final_residual, rep_a.final_residual),
                          rep_t.converged and rep_a.converged)
    return fem.Field(psi.space, values), report
