"""Built-in benchmark set-ups: initial data and boundary conditions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .flow import VelocityBC

CASES = ("accuracy", "energy_decay", "discontinuous", "lid_driven")

DISCONTINUOUS_FLOOR = 0.2


@dataclass
class CaseSetup:
    """Everything a run needs beyond the physical parameters.

    ``eta_bc[i]`` is ``None`` or ``(dofs, values)`` for species ``i``;
    ``potential_bc`` likewise. Species with Dirichlet data skip mass
    renormalisation.
    """

    c0: list
    psi0: tuple
    velocity_bc: VelocityBC
    eta_bc: list = field(default_factory=lambda: [None, None])
    potential_bc: tuple | None = None
    rescale_potential: bool = True
    energy_law: bool = True


def _cc(x, y):
    return np.cos(np.pi * x) * np.cos(np.pi * y)


def _quartic(x, y):
    return x**2 * (1 - x) ** 2 + y**2 * (1 - y) ** 2


def lid_velocity(x, t):
    """Regularised lid speed, switched on smoothly around ``t = 0.5``."""
    return 16.0 * (1.0 + np.tanh(8.0 * (t - 0.5))) * x**2 * (1.0 - x) ** 2


def _zero(x, y):
    return np.zeros_like(x)


def build_case(name, disc):
    """Initial data and boundary conditions of a named case.

    ``c0`` holds nodal P2 concentrations for the positive and negative
    species; ``psi0`` three callables for the log-conformation components.
    """
    xy = disc.P2.dof_coordinates()
    x, y = xy[:, 0], xy[:, 1]
    no_slip = VelocityBC.no_slip(disc)

    if name == "accuracy":
        return CaseSetup([1.2 + _cc(x, y), 1.2 - _cc(x, y)], (_zero, _zero, _zero), no_slip)

    if name == "energy_decay":
        psi0 = (lambda a, b: 2.0 * _quartic(a, b) + 0.1, _zero,
                lambda a, b: _quartic(a, b) + 0.1)
        return CaseSetup([1.1 + _cc(x, y), 1.1 - _cc(x, y)], psi0, no_slip)

    if name == "discontinuous":
        right = x > 0.75
        cp = np.where(right & (y > 11 / 20), 1.0, DISCONTINUOUS_FLOOR)
        cn = np.where(right & (y < 9 / 20), 1.0, DISCONTINUOUS_FLOOR)
        cp = np.maximum(cp, DISCONTINUOUS_FLOOR)
        cn = np.maximum(cn, DISCONTINUOUS_FLOOR)
        return CaseSetup([cp, cn], (_zero, _zero, _zero), no_slip)

    if name == "lid_driven":
        dofs = disc.P2.boundary_dofs(("left", "right", "bottom", "top"))
        top = np.isclose(xy[dofs, 1], disc.mesh.bounds[3])
        xd = xy[dofs, 0]
        zero = np.zeros(len(dofs))

        def wall(t):
            return np.where(top, lid_velocity(xd, t), 0.0), zero
        left = disc.P2.boundary_dofs("left")
        right = disc.P2.boundary_dofs("right")
        sides = np.concatenate([left, right])
        order = np.argsort(sides)
        sides = sides[order]

        def pack(vl, vr):
            vals = np.concatenate([np.full(len(left), vl), np.full(len(right), vr)])
            return sides, vals[order]
        return CaseSetup(
            [10.0 * x + 1.0, np.ones_like(x)],
            (_zero, _zero, _zero),
            VelocityBC(dofs, wall),
            eta_bc=[pack(np.log(1.0), np.log(11.0)), pack(0.0, 0.0)],
            potential_bc=pack(0.0, 1.0),
            rescale_potential=False,
            energy_law=False,
        )

    raise ConfigurationError(f"unknown case {name!r}; expected one of {', '.join(CASES)}")
