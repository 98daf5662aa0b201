"""Pointwise algebra for symmetric 2x2 tensors.

A symmetric tensor is stored as its three independent components
``(xx, xy, yy)`` along the last axis of an array, so every routine here works
on a single tensor (shape ``(3,)``) or on a whole batch (shape ``(..., 3)``).
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DomainError

EPS_DEGENERATE = 1e-10

# generator of 2D rotations: an antisymmetric matrix is a multiple of J
J = np.array([[0.0, 1.0], [-1.0, 0.0]])


def sym(xx, xy, yy):
    """Pack components into a ``(..., 3)`` array."""
    return np.stack(np.broadcast_arrays(xx, xy, yy), axis=-1).astype(float)


def to_matrix(a):
    a = np.asarray(a, dtype=float)
    out = np.empty(a.shape[:-1] + (2, 2))
    out[..., 0, 0] = a[..., 0]
    out[..., 0, 1] = out[..., 1, 0] = a[..., 1]
    out[..., 1, 1] = a[..., 2]
    return out


def from_matrix(m):
    """Symmetric part of ``(..., 2, 2)`` matrices, packed."""
    m = np.asarray(m, dtype=float)
    return sym(m[..., 0, 0], 0.5 * (m[..., 0, 1] + m[..., 1, 0]), m[..., 1, 1])


def identity(shape=()):
    return sym(np.ones(shape), np.zeros(shape), np.ones(shape))


def trace(a):
    return a[..., 0] + a[..., 2]


def _split(a):
    a = np.asarray(a, dtype=float)
    xx, xy, yy = a[..., 0], a[..., 1], a[..., 2]
    m = 0.5 * (xx + yy)
    d = np.hypot(0.5 * (xx - yy), xy)
    return m, d, xx, xy, yy


def eig_sym2(a):
    """Eigenvalues ``l1 >= l2`` and rotation angle ``theta``.

    ``a = R diag(l1, l2) R^T`` with ``R = [[cos t, -sin t], [sin t, cos t]]``.
    The angle lies in ``(-pi/2, pi/2]`` so the first eigenvector
    ``(cos t, sin t)`` is in the closed right half-plane.
    """
    m, d, xx, xy, yy = _split(a)
    theta = 0.5 * np.arctan2(2.0 * xy, xx - yy)
    theta = np.where(theta <= -0.5 * np.pi, theta + np.pi, theta)
    return m + d, m - d, theta


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    R = np.empty(np.shape(theta) + (2, 2))
    R[..., 0, 0] = c
    R[..., 0, 1] = -s
    R[..., 1, 0] = s
    R[..., 1, 1] = c
    return R


def _sinhc(d):
    # sinh(d)/d, accurate near zero
    small = np.abs(d) < 1e-4
    safe = np.where(small, 1.0, d)
    return np.where(small, 1.0 + d * d / 6.0, np.sinh(safe) / safe)


def exp_sym2(a):
    """Matrix exponential.

    With ``a = m I + (a - m I)`` and ``(a - m I)^2 = d^2 I`` the series sums to
    ``e^m [cosh(d) I + sinh(d)/d (a - m I)]``.
    """
    m, d, xx, xy, yy = _split(a)
    em = np.exp(m)
    ch = np.cosh(d)
    sc = _sinhc(d)
    return sym(em * (ch + sc * (xx - m)), em * sc * xy, em * (ch + sc * (yy - m)))


def log_sym2(a):
    """Matrix logarithm of a symmetric positive definite tensor."""
    m, d, xx, xy, yy = _split(a)
    l1, l2 = m + d, m - d
    if np.any(~(l2 > 0.0)):
        raise DomainError("logarithm needs a positive definite tensor")
    # log a = (L1 + L2)/2 I + (L1 - L2)/(l1 - l2) (a - m I) with Lk = log lk;
    # the divided difference tends to 1/m as the gap closes
    L1, L2 = np.log(l1), np.log(l2)
    small = d < 1e-4 * m
    r = d / m
    f = np.where(small, (1.0 + r * r / 3.0) / m,
                 (L1 - L2) / np.where(small, 1.0, 2.0 * d))
    half_logdet = 0.5 * (L1 + L2)
    return sym(half_logdet + f * (xx - m), f * xy, half_logdet + f * (yy - m))


def min_eigenvalue(a):
    m, d = _split(a)[:2]
    return m - d


class GradDecomp(NamedTuple):
    """``grad u = omega J + B + n J sigma^{-1}``."""

    omega: np.ndarray
    b: np.ndarray
    n: np.ndarray

    def reconstruct(self, sigma):
        sinv = np.linalg.inv(to_matrix(sigma))
        om = np.asarray(self.omega)[..., None, None] * J
        nn = np.asarray(self.n)[..., None, None] * J
        return om + to_matrix(self.b) + nn @ sinv


def decompose_grad(grad_u, sigma, eps_degenerate=EPS_DEGENERATE):
    """Split a velocity gradient relative to a conformation tensor.

    Parameters
    ----------
    grad_u : (..., 2, 2) ndarray
        ``grad_u[..., i, j] = d u_i / d x_j``.
    sigma : (..., 3) ndarray
        Symmetric positive definite tensors.
    eps_degenerate : float
        Relative eigenvalue gap below which ``sigma`` counts as a multiple of
        the identity; then ``Omega = 0``, ``B`` is the symmetric part of the
        gradient and ``N`` carries its skew part times ``tr(sigma) / 2``.

    Returns
    -------
    GradDecomp
        Rotation generator ``omega``, symmetric ``B`` commuting with
        ``sigma``, and generator ``n`` of the antisymmetric ``N``.
    """
    G = np.asarray(grad_u, dtype=float)
    s1, s2, theta = eig_sym2(sigma)
    if np.any(~(s2 > 0.0)):
        raise DomainError("decomposition needs a positive definite conformation tensor")
    R = rotation(theta)
    m = np.swapaxes(R, -1, -2) @ G @ R
    m11, m12, m21, m22 = m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]

    degenerate = (s1 - s2) <= eps_degenerate * s1
    gap = np.where(degenerate, 1.0, s2 - s1)
    inv_gap = np.where(degenerate, 1.0, 1.0 / s2 - 1.0 / s1)
    omega = np.where(degenerate, 0.0, (s2 * m12 + s1 * m21) / gap)
    n = np.where(degenerate, 0.25 * (G[..., 0, 1] - G[..., 1, 0]) * (s1 + s2),
                 (m12 + m21) / inv_gap)

    c, s = np.cos(theta), np.sin(theta)
    b_rot = sym(m11 * c * c + m22 * s * s, (m11 - m22) * c * s, m11 * s * s + m22 * c * c)
    b_sym = from_matrix(G)
    b = np.where(degenerate[..., None], b_sym, b_rot)
    return GradDecomp(omega, b, n)


def commutator_source(omega, psi):
    """``Omega psi - psi Omega`` for ``Omega = omega J``."""
    psi = np.asarray(psi, dtype=float)
    omega = np.asarray(omega, dtype=float)
    off = psi[..., 2] - psi[..., 0]
    return sym(2.0 * omega * psi[..., 1], omega * off, -2.0 * omega * psi[..., 1])


def elastic_energy_density(psi):
    """``tr(e^psi - psi - I)``, summed over eigenvalues as ``expm1(l) - l``."""
    l1, l2, _ = eig_sym2(psi)
    return (np.expm1(l1) - l1) + (np.expm1(l2) - l2)


def dissipation_density(psi):
    """``tr(e^psi + e^{-psi} - 2I) = sum 4 sinh^2(l/2)``."""
    l1, l2, _ = eig_sym2(psi)
    return 4.0 * (np.sinh(0.5 * l1) ** 2 + np.sinh(0.5 * l2) ** 2)


def frobenius(a, b):
    """``a : b`` with the off-diagonal counted twice."""
    return a[..., 0] * b[..., 0] + 2.0 * a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]
