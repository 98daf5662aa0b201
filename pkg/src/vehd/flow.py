"""Velocity sub-steps and the pressure projection.

The intermediate velocity is split as ``ubar = u1 + xi * u2``: ``u1`` carries
the old velocity, the old pressure and all non-homogeneous wall data, ``u2``
collects the explicit forces (elastic, convective, Coulomb) so that the scalar
``xi`` can be chosen afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from . import fem
from .linalg import DEFAULT_TOL, SolverReport, factorized, solve_spd

# pressure dofs up to which the pinned Schur complement is formed densely
DENSE_PRESSURE_LIMIT = 6000


@dataclass
class VelocityBC:
    """Dirichlet data for both velocity components on a set of scalar P2 dofs.

    ``values(t)`` returns ``(ux, uy)`` arrays aligned with ``dofs``.
    """

    dofs: np.ndarray
    values: Callable

    @classmethod
    def no_slip(cls, disc, markers=("left", "right", "bottom", "top")):
        dofs = disc.P2.boundary_dofs(markers)
        zero = np.zeros(len(dofs))
        return cls(dofs, lambda t: (zero, zero))


def divergence_matrices(disc):
    """``Dd[c][i, j] = (d_c phi_j, q_i)`` and ``Dg[c][i, j] = (phi_j, d_c q_i)``.

    Rows are P1 pressure dofs, columns scalar P2 dofs.
    """
    def build():
        dd, dg = [], []
        for c in range(2):
            dd.append(disc.assemble(
                np.einsum("tq,qi,tqj->tij", disc.w, disc.phi1, disc.dphi2[..., c]), 1, 2))
            dg.append(disc.assemble(
                np.einsum("tq,ti,qj->tij", disc.w, disc.dphi1[..., c], disc.phi2), 1, 2))
        return dd, dg
    return disc.cached("divergence", build)


def _velocity_operator(disc, Re, dt, bc):
    """Constrained ``M/dt + K/Re`` with its preconditioner."""
    key = ("velocity_op", Re, dt, None if bc is None else bc.dofs.tobytes())

    def build():
        A = disc.assemble(fem.mass_kernel(disc) / dt + fem.stiffness_kernel(disc) / Re)
        dofs = np.zeros(0, dtype=np.int64) if bc is None else bc.dofs
        con = fem.DirichletConstraint(A, dofs)
        Ac = con.matrix(A)
        return A, con, Ac, factorized(Ac)
    return disc.cached(key, build)


def _solve_velocity(disc, rhs, Re, dt, bc, values, tol, x0=None):
    A, con, Ac, pc = _velocity_operator(disc, Re, dt, bc)
    n = disc.P2.n_scalar
    out, reports = [], []
    for c in range(2):
        b = con.rhs(A, rhs[c], values[c])
        guess = None if x0 is None else x0[c * n:(c + 1) * n]
        x, rep = solve_spd(Ac, b, tol=tol, x0=guess, precond=pc)
        x[con.dofs] = values[c]   # exact wall data, free of solver roundoff
        reports.append(rep)
        out.append(x)
    return fem.Field(disc.P2vec, np.concatenate(out)), _merge(reports)


def _merge(reports):
    return SolverReport(sum(r.iterations for r in reports),
                        max(r.final_residual for r in reports),
                        all(r.converged for r in reports))


def solve_u1(disc, u_n, p_n, Re, dt, bc=None, t_new=0.0, tol=DEFAULT_TOL):
    """``(u1 - u^n)/dt + (1/Re) K u1 = (div v, p^n)`` with wall data at ``t_new``."""
    dd, _ = divergence_matrices(disc)
    M = disc.mass()
    p = p_n.values if hasattr(p_n, "values") else p_n
    rhs = [M @ u_n.component(c) / dt + dd[c].T @ p for c in range(2)]
    if bc is None:
        values = (np.zeros(0), np.zeros(0))
    else:
        values = bc.values(t_new)
    return _solve_velocity(disc, rhs, Re, dt, bc, values, tol, x0=u_n.values)


def u2_load(disc, u_n, sigma, species, Vbar, Co, M_el):
    """Load vector of the explicit forces, one array per velocity component.

    ``-M (sigma, grad v) - ((u^n . grad) u^n, v) - (Co sum z c grad Vbar, v)``.
    """
    sq = disc.field_at_qp(sigma)
    uq = disc.field_at_qp(u_n)
    gV = disc.qp_gradients(Vbar)
    rho = sum(s.z * disc.qp_values(s.c) for s in species) if species else 0.0
    out = []
    for c in range(2):
        gu = disc.qp_gradients(u_n.component(c))
        conv = (uq * gu).sum(axis=-1)
        body = -conv - Co * rho * gV[..., c]
        # row c of sigma: (xx, xy) for c = 0, (xy, yy) for c = 1
        stress = sq[..., [0, 1]] if c == 0 else sq[..., [1, 2]]
        local = fem.load_kernel(disc, body) - M_el * fem.grad_load_kernel(disc, stress)
        out.append(fem.assemble_vector(disc.P2, local))
    return out


def solve_u2(disc, u_n, sigma, species, Vbar, Co, M_el, Re, dt, bc=None, load=None,
             tol=DEFAULT_TOL):
    """``u2/dt + (1/Re) K u2 = load`` with homogeneous wall data.

    Returns
    -------
    u2 : Field
    load : list of ndarray
        The unconstrained load vectors (reused for the auxiliary-variable terms).
    report : SolverReport
    """
    if load is None:
        load = u2_load(disc, u_n, sigma, species, Vbar, Co, M_el)
    nb = 0 if bc is None else len(bc.dofs)
    zero = np.zeros(nb)
    u2, rep = _solve_velocity(disc, load, Re, dt, bc, (zero, zero), tol)
    return u2, load, rep




class PressureOperator:
    """Discrete pressure Laplacian ``S = Dg M^{-1} Dg^T`` of the projection.

    ``M`` is the velocity mass matrix restricted to the dofs free of wall
    data and ``Dg = (phi_j, grad q_i)``. With this operator the L2-projected
    velocity ``M u = M ubar - dt Dg^T dp`` satisfies ``(u, grad q) = 0`` for
    every P1 ``q``. ``p^T S p`` is the squared norm of the discrete gradient
    of ``p`` (the L2 projection of ``grad p`` onto the velocity space), which
    is never larger than ``||grad p||^2``.

    ``S`` is dense, so it is applied through mass solves. Systems with ``S``
    (first pressure dof pinned) are preconditioned by a Cholesky factor of the
    pinned ``S`` when it is small enough to form, else by a factorisation of
    the sparse saddle-point matrix ``[[M, 0, G0^T], [0, M, G1^T], [G0, G1, 0]]``
    whose pressure block of the inverse is ``-S^{-1}``.
    """

    def __init__(self, disc, bc=None):
        _, dg = divergence_matrices(disc)
        n2 = disc.P2.n_scalar
        walls = np.zeros(0, dtype=np.int64) if bc is None else bc.dofs
        free = np.setdiff1d(np.arange(n2), walls)
        self.n = disc.P1.n_scalar
        self.weights = disc.dof_weights(1)
        self._g = [dg[c][:, free].tocsr() for c in range(2)]
        self._gt = [g.T.tocsr() for g in self._g]
        Mf = disc.mass()[free][:, free].tocsc()
        self._mass_solve = factorized(Mf)
        self._pinned = _PinnedOperator(self)
        if self.n <= DENSE_PRESSURE_LIMIT:
            self._precond = self._dense_preconditioner()
        else:
            self._precond = self._saddle_preconditioner(Mf)

    def _dense_preconditioner(self):
        S = np.zeros((self.n, self.n))
        for g in self._g:
            S += np.asarray(g @ self._mass_solve(g.T.toarray()))
        S = 0.5 * (S + S.T)
        S[0, :] = 0.0
        S[:, 0] = 0.0
        S[0, 0] = 1.0
        factor = cho_factor(S)
        return lambda r: cho_solve(factor, r, check_finite=False)

    def _saddle_preconditioner(self, Mf):
        # pin the first pressure dof: drop its column, identity row
        keep = sp.diags(np.r_[0.0, np.ones(self.n - 1)])
        g0, g1 = (keep @ g for g in self._g)
        corner = sp.csr_matrix(([1.0], ([0], [0])), shape=(self.n, self.n))
        saddle = sp.bmat([[Mf, None, g0.T], [None, Mf, g1.T], [g0, g1, -corner]])
        solve = factorized(saddle, diagonal_pivots=True)
        nv = 2 * Mf.shape[0]

        def apply(r):
            rhs = np.zeros(nv + self.n)
            rhs[nv:] = r
            return -solve(rhs)[nv:]
        return apply

    def matvec(self, x):
        w = self._mass_solve(np.column_stack([gt @ x for gt in self._gt]))
        return self._g[0] @ w[:, 0] + self._g[1] @ w[:, 1]

    def norm2(self, p):
        return float(p @ self.matvec(p))

    def solve(self, b, tol=DEFAULT_TOL):
        """Mean-zero solution of ``S x = b`` (``b`` must sum to zero)."""
        b = np.array(b, dtype=float)
        b[0] = 0.0
        x, rep = solve_spd(self._pinned, b, tol=tol, precond=self._precond)
        return x - (self.weights @ x) / self.weights.sum(), rep


class _PinnedOperator:
    """``S`` with the first row and column replaced by the identity."""

    def __init__(self, op):
        self.op = op
        self.shape = (op.n, op.n)

    def __matmul__(self, x):
        y = np.array(x, dtype=float)
        y[0] = 0.0
        out = self.op.matvec(y)
        out[0] = x[0]
        return out


def pressure_operator(disc, bc=None):
    key = ("pressure_op", None if bc is None else bc.dofs.tobytes())
    return disc.cached(key, lambda: PressureOperator(disc, bc))


def project_pressure(disc, ubar, p_n, dt, bc=None, tol=DEFAULT_TOL):
    """Solve ``S dp = Dg ubar / dt`` for mean-zero ``dp``; ``p = p^n + dp``, de-meaned.

    Returns
    -------
    p_new, dp : ndarray
    report : SolverReport
    """
    _, dg = divergence_matrices(disc)
    b = (dg[0] @ ubar.component(0) + dg[1] @ ubar.component(1)) / dt
    op = pressure_operator(disc, bc)
    dp, rep = op.solve(b, tol)
    p = p_n + dp
    w = op.weights
    return p - (w @ p) / w.sum(), dp, rep


def correct_velocity(disc, ubar, dp, dt, bc=None, tol=DEFAULT_TOL):
    """L2 projection of ``ubar - dt grad dp`` onto P2, keeping ``ubar`` on the walls."""
    _, dg = divergence_matrices(disc)
    M = disc.mass()
    key = ("projection", None if bc is None else bc.dofs.tobytes())

    def build():
        dofs = np.zeros(0, dtype=np.int64) if bc is None else bc.dofs
        con = fem.DirichletConstraint(M, dofs)
        Mc = con.matrix(M)
        return con, Mc, factorized(Mc)
    con, Mc, pc = disc.cached(key, build)
    out, reports = [], []
    for c in range(2):
        uc = ubar.component(c)
        rhs = M @ uc - dt * (dg[c].T @ dp)
        b = con.rhs(M, rhs, uc[con.dofs])
        x, rep = solve_spd(Mc, b, tol=tol, x0=uc, precond=pc)
        x[con.dofs] = uc[con.dofs]
        reports.append(rep)
        out.append(x)
    return fem.Field(disc.P2vec, np.concatenate(out)), _merge(reports)


def divergence_residual(disc, u):
    """``max_q |(u, grad q)| / ||u||`` over the P1 nodal basis."""
    _, dg = divergence_matrices(disc)
    r = dg[0] @ u.component(0) + dg[1] @ u.component(1)
    norm = np.sqrt(velocity_norm2(disc, u))
    return float(np.abs(r).max() / norm) if norm > 0.0 else 0.0


def velocity_norm2(disc, u):
    M = disc.mass()
    return float(sum(c @ (M @ c) for c in u.components()))
