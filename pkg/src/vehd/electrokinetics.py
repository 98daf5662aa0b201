"""Ion transport in log-concentration form and the electric potential.

Concentrations are carried as ``c = s exp(eta)`` with ``eta`` a P2 field and
``s`` a spatially constant factor fixed by mass renormalisation, so that
``c > 0`` everywhere by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem
from .errors import CompatibilityError, InternalError
from .linalg import DEFAULT_TOL, factorized, solve_general, solve_spd

COMPAT_TOL = 1e-10


@dataclass
class Species:
    """One ionic species.

    Attributes
    ----------
    z : int
        Valence.
    eta : ndarray
        P2 dof values of the log concentration.
    c : ndarray
        P2 dof values of the concentration, ``scale * exp(eta)``.
    scale : float
        Renormalisation factor.
    initial_mass : float
    """

    z: int
    eta: np.ndarray
    c: np.ndarray
    scale: float = 1.0
    initial_mass: float = field(default=float("nan"))

    @classmethod
    def from_concentration(cls, disc, c, z):
        c = np.asarray(c, dtype=float)
        if np.any(~(c > 0.0)):
            raise CompatibilityError("concentrations must be positive to take logarithms")
        eta = np.log(c)
        return cls(z=int(z), eta=eta, c=np.exp(eta), scale=1.0,
                   initial_mass=disc.integral(np.exp(eta)))

    def mass(self, disc):
        return disc.integral(self.c)

    def copy(self):
        return Species(self.z, self.eta.copy(), self.c.copy(), self.scale, self.initial_mass)


def _bc_key(bc):
    if bc is None:
        return None
    dofs, values = bc
    return np.asarray(dofs).tobytes()


def _constraint(disc, A, bc, tag):
    key = ("constraint", tag, _bc_key(bc))
    return disc.cached(key, lambda: fem.DirichletConstraint(A, bc[0]))


def eta_matrix_local(disc, eta_n, u, V, z, Pe, dt):
    """Local matrices of the log-concentration system.

    ``(eta/dt, s) - (u eta, grad s) - (1/Pe)((grad eta_n + z grad V) . grad eta, s)
    + (1/Pe)(grad eta, grad s)``.
    """
    base = disc.cached(("eta_base_local", dt, Pe), lambda: (
        fem.mass_kernel(disc) / dt + fem.stiffness_kernel(disc) / Pe))
    uq = disc.field_at_qp(u)
    a = (disc.qp_gradients(eta_n) + z * disc.qp_gradients(V)) / Pe
    wu = disc.directional(uq) * disc.w[..., None]
    wa = disc.directional(a) * disc.w[..., None]
    # (u phi_j, grad phi_i) + (a . grad phi_j, phi_i)
    adv = wu.transpose(0, 2, 1) @ disc.phi2 + disc.phi2.T @ wa
    return base - adv


def step_eta(disc, species, u, V, Pe, dt, bc=None, tol=DEFAULT_TOL):
    """Advance the log concentration of one species by one step.

    Parameters
    ----------
    disc : Discretization
    species : Species
        Supplies ``eta^n`` and the valence.
    u : Field
        Velocity at the old time level.
    V : ndarray or Field
        Rescaled potential at the old time level (P2 values).
    Pe, dt : float
    bc : (dofs, values), optional
        Dirichlet data for ``eta`` (the log of boundary concentrations).

    Returns
    -------
    eta : ndarray
    report : SolverReport
    """
    Vv = V.values if hasattr(V, "values") else np.asarray(V)
    z = species.z
    A = disc.assemble(eta_matrix_local(disc, species.eta, u, Vv, z, Pe, dt))
    K = disc.stiffness()
    b = disc.mass() @ species.eta / dt - (z / Pe) * (K @ Vv)

    def build_pc():
        A0 = disc.assemble(fem.mass_kernel(disc) / dt + fem.stiffness_kernel(disc) / Pe)
        if bc is not None:
            A0 = _constraint(disc, A0, bc, "P2").matrix(A0)
        return factorized(A0)

    pc = disc.cached(("eta_pc", dt, Pe, _bc_key(bc)), build_pc)
    if bc is not None:
        con = _constraint(disc, A, bc, "P2")
        b = con.rhs(A, b, bc[1])
        A = con.matrix(A)
    return solve_general(A, b, tol=tol, x0=species.eta, precond=pc)


def renormalize_concentration(disc, species, eta, conserve=True):
    """New concentration from the updated log concentration.

    With ``conserve`` the nodal exponential is rescaled so that the integral
    equals the previous one. Every step conserves it, so the target is the
    initial mass, which keeps roundoff from accumulating. Otherwise
    ``c = exp(eta)``, used when Dirichlet data fixes boundary concentrations.

    Returns a new :class:`Species`.
    """
    cbar = np.exp(eta)
    if not conserve:
        return Species(species.z, eta, cbar, 1.0, species.initial_mass)
    total = disc.integral(cbar)
    if not total > 0.0:
        raise InternalError(f"non-positive concentration integral {total}")
    target = species.initial_mass
    if not np.isfinite(target):
        target = disc.integral(species.c)
    factor = target / total
    return Species(species.z, eta, factor * cbar, factor, species.initial_mass)


def charge_density(species_list):
    return sum(s.z * s.c for s in species_list)


def solve_potential(disc, species_list, lam, bc=None, tol=DEFAULT_TOL):
    """Solve ``(lam grad V, grad phi) = (sum z c, phi)``.

    Without ``bc`` the problem is pure Neumann: the source must have zero
    integral (up to roundoff, which is removed) and the mean-zero solution is
    returned.

    Returns
    -------
    V : ndarray
    report : SolverReport
    """
    M = disc.mass()
    parts = [s.z * (M @ s.c) for s in species_list]
    b = sum(parts) if parts else np.zeros(M.shape[0])
    A = lam * disc.stiffness()
    if bc is None:
        w = disc.dof_weights()
        total = b.sum()
        # roundoff in the net charge scales with the ion content, not with the
        # (possibly vanishing) net charge itself
        scale = sum(np.linalg.norm(p) for p in parts)
        if abs(total) > COMPAT_TOL * max(scale, np.finfo(float).tiny):
            raise CompatibilityError(
                f"net charge {total:.3e} is incompatible with insulating boundaries")
        b = b - total * w / w.sum()
        return solve_pinned(disc, A, b, ("potential", lam), tol)

    con = disc.cached(("constraint", "potential", _bc_key(bc)),
                      lambda: fem.DirichletConstraint(A, bc[0]))
    Ac = con.matrix(A)
    pc = disc.cached(("potential_pc", lam, _bc_key(bc)), lambda: factorized(Ac))
    return solve_spd(Ac, con.rhs(A, b, bc[1]), tol=tol, precond=pc)


def solve_pinned(disc, A, b, key, tol=DEFAULT_TOL, degree=2):
    """Pure-Neumann solve: pin dof 0 to zero, then subtract the discrete mean."""
    con = disc.cached(("pin", degree), lambda: fem.DirichletConstraint(A, [0]))
    Ac = disc.cached(("pinned", key), lambda: con.matrix(A))
    pc = disc.cached(("pinned_pc", key), lambda: factorized(Ac))
    x, rep = solve_spd(Ac, con.rhs(A, b, [0.0]), tol=tol, precond=pc)
    w = disc.dof_weights(degree)
    return x - (w @ x) / w.sum(), rep


def ionic_dissipation(disc, species_list, Vbar, Co, Pe):
    """``(Co/Pe) sum_i int c_i |grad(log c_i + z_i Vbar)|^2``.

    At quadrature points ``c = scale * exp(eta_h)`` and ``grad log c = grad eta_h``.
    """
    gV = disc.qp_gradients(Vbar)
    total = 0.0
    for s in species_list:
        cq = s.scale * np.exp(disc.qp_values(s.eta))
        g = disc.qp_gradients(s.eta) + s.z * gV
        total += disc.integrate(cq * (g * g).sum(axis=-1))
    return Co / Pe * total
