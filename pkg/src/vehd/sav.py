"""Scalar auxiliary variable: modified energy, the split coefficients and the
scalar update that keeps every step linear while preserving an energy law.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor2 as t2
from .conformation import nodal
from .electrokinetics import ionic_dissipation
from .errors import ConfigurationError, InternalError
from .flow import pressure_operator, velocity_norm2

# off-diagonal tensor component counts twice in a full contraction
_TENSOR_WEIGHTS = (1.0, 2.0, 1.0)


@dataclass
class AuxState:
    r: float
    xi: float
    B_const: float


def electric_energy(disc, Vbar, Co, lam):
    return 0.5 * Co * lam * float(Vbar @ (disc.stiffness() @ Vbar))


def entropy_energy(disc, species, Co):
    """``Co sum int c (log c - 1)`` for the nodal interpolant of the integrand."""
    w = disc.dof_weights()
    return Co * sum(float(w @ (s.c * (np.log(s.scale) + s.eta - 1.0))) for s in species)


def elastic_energy(disc, psi, M_el):
    """``(M/2) int tr(e^psi - psi - I)`` for the nodal interpolant."""
    return 0.5 * M_el * float(disc.dof_weights() @ t2.elastic_energy_density(nodal(psi)))


def compute_EP(disc, species, Vbar, psi, Co, lam, M_el, B_const=None):
    """Modified potential energy (electric + ionic entropy + elastic).

    If ``B_const`` is given, a non-positive ``E_P + B`` raises
    :class:`ConfigurationError`.
    """
    ep = electric_energy(disc, Vbar, Co, lam) + entropy_energy(disc, species, Co) \
        + elastic_energy(disc, psi, M_el)
    if B_const is not None and not ep + B_const > 0.0:
        raise ConfigurationError(f"E_P + B = {ep + B_const:.3e} is not positive; increase B")
    return ep


def polymer_dissipation(disc, psi, Wi, M_el):
    """``(M / 2Wi) int tr(e^psi + e^-psi - 2I)`` for the nodal interpolant."""
    return 0.5 * M_el / Wi * float(disc.dof_weights() @ t2.dissipation_density(nodal(psi)))


def diffusive_dissipation(disc, psi, sigma, kappa, M_el):
    """``(kappa M / 2) int grad psi : grad sigma``."""
    K = disc.stiffness()
    total = sum(w * float(a @ (K @ b)) for w, a, b in
                zip(_TENSOR_WEIGHTS, psi.components(), sigma.components()))
    return 0.5 * kappa * M_el * total


def compute_zetas(disc, u1, u2, load, EP, B_const, dissipation):
    """Split coefficients of the auxiliary-variable equation.

    Parameters
    ----------
    u1, u2 : Field
        The two velocity pieces.
    load : list of ndarray
        Load vectors of the explicit forces (right-hand side of the ``u2``
        problem); ``load . u`` is the force functional applied to ``u``.
    EP, B_const : float
    dissipation : float
        Ionic plus polymer plus diffusive dissipation, all non-negative.

    Returns
    -------
    zeta1, zeta2 : float
    """
    n = u1.space.n_scalar
    f1 = sum(float(load[c] @ u1.values[c * n:(c + 1) * n]) for c in range(2))
    f2 = sum(float(load[c] @ u2.values[c * n:(c + 1) * n]) for c in range(2))
    root = 2.0 * np.sqrt(EP + B_const)
    return -f1 / root, (f2 + dissipation) / root


def total_dissipation(disc, species, Vbar, psi, sigma, params):
    return (ionic_dissipation(disc, species, Vbar, params.Co, params.Pe)
            + polymer_dissipation(disc, psi, params.Wi, params.M)
            + diffusive_dissipation(disc, psi, sigma, params.kappa, params.M))


def update_xi_r(r_n, EP, zeta1, zeta2, dt, B_const):
    """``xi = (r^n + dt zeta1) / (sqrt(E_P + B) + dt zeta2)``, ``r = xi sqrt(E_P + B)``."""
    root = np.sqrt(EP + B_const)
    denom = root + dt * zeta2
    if not denom > 0.0:
        raise InternalError(
            f"auxiliary-variable denominator {denom:.3e} is not positive "
            f"(E_P + B = {EP + B_const:.3e}, zeta2 = {zeta2:.3e})")
    xi = (r_n + dt * zeta1) / denom
    return float(xi), float(xi * root)


def rescale_potential(Vbar, xi):
    return xi * Vbar


def discrete_energy(disc, u, r, p, dt, bc=None):
    """``||u||^2/2 + r^2 + dt^2 ||grad_h p||^2 / 2``.

    ``grad_h p`` is the discrete gradient of the projection step (the L2
    projection of ``grad p`` onto the velocity space with wall data ``bc``).
    """
    gp = pressure_operator(disc, bc).norm2(p)
    return 0.5 * velocity_norm2(disc, u) + r * r + 0.5 * dt * dt * gp
