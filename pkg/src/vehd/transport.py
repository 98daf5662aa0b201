"""Semi-Lagrangian departure points for the material derivative.

Each quadrature point ``x`` is traced back one explicit Euler step along the
velocity, ``X = x - dt u(x)``, clamped to the closed rectangle, and located in
the mesh so that old fields can be sampled at ``X``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InternalError
from .fem import evaluate_many
from .mesh import locate_points


@dataclass
class DepartureSet:
    """Feet of the characteristics, one per quadrature point.

    Arrays are shaped ``(nt, nq, ...)`` like the quadrature tables of the
    :class:`~vehd.fem.Discretization` they were built from.
    """

    points: np.ndarray
    triangles: np.ndarray
    bary: np.ndarray
    clamped: np.ndarray


def backtrack(disc, u, dt):
    """Departure points ``x - dt u(x)`` of all quadrature points."""
    uq = disc.field_at_qp(u)
    feet = disc.xq - dt * uq
    x0, x1, y0, y1 = disc.mesh.bounds
    clamped_pts = np.empty_like(feet)
    clamped_pts[..., 0] = np.clip(feet[..., 0], x0, x1)
    clamped_pts[..., 1] = np.clip(feet[..., 1], y0, y1)
    clamped = np.any(clamped_pts != feet, axis=-1)

    nt, nq = feet.shape[:2]
    hints = np.repeat(np.arange(nt), nq)
    try:
        tris, bary = locate_points(disc.mesh, clamped_pts.reshape(-1, 2), hints)
    except DomainError as exc:  # clamped points are inside by construction
        raise InternalError(f"departure point location failed: {exc}") from exc
    return DepartureSet(clamped_pts, tris.reshape(nt, nq), bary.reshape(nt, nq, 3), clamped)


def sample_at_departure(field, dep):
    """Values of ``field`` at the departure points, shape ``(nt, nq[, ncomp])``."""
    nt, nq = dep.triangles.shape
    vals = evaluate_many(field, dep.triangles.ravel(), dep.bary.reshape(-1, 3))
    return vals.reshape((nt, nq) + vals.shape[1:])
