"""Lagrange P1/P2 finite elements on triangles.

The :class:`Discretization` object bundles a mesh with its function spaces,
quadrature tables and the constant matrices every time step reuses. Element
kernels return dense local arrays of shape ``(nt, n_test, n_trial)``; the
global scatter-add goes through a cached sparsity pattern so that assembling a
matrix costs a single ``bincount``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError
from .mesh import locate_points

# ---------------------------------------------------------------------------
# quadrature


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _rule(*orbits, centroid=None):
    pts, wts = [], []
    if centroid is not None:
        pts.append((1 / 3, 1 / 3, 1 / 3))
        wts.append(centroid)
    for p, w in orbits:
        pts += p
        wts += w
    return np.array(pts), np.array(wts)


def _rules():
    s15 = sqrt(15.0)
    deg4 = _rule(
        _orbit3(0.445948490915965, 0.223381589678011),
        _orbit3(0.091576213509771, 0.109951743655322),
    )
    return {
        1: _rule(centroid=1.0),
        2: _rule(_orbit3(1 / 6, 1 / 3)),
        3: deg4,
        4: deg4,
        5: _rule(
            _orbit3((6 - s15) / 21, (155 - s15) / 1200),
            _orbit3((6 + s15) / 21, (155 + s15) / 1200),
            centroid=9 / 40,
        ),
        6: _rule(
            _orbit3(0.249286745170910, 0.116786275726379),
            _orbit3(0.063089014491502, 0.050844906370207),
            _orbit6(0.053145049844817, 0.310352451033784, 0.082851075618374),
        ),
    }


_RULES = _rules()


def quadrature(degree):
    """Symmetric triangle rule exact up to ``degree``.

    Returns
    -------
    points : (nq, 3) ndarray
        Barycentric coordinates.
    weights : (nq,) ndarray
        Weights for the reference triangle; they sum to 1/2.
    """
    if degree not in _RULES:
        raise InvalidArgumentError(f"no quadrature rule of degree {degree} (supported: 1-6)")
    pts, w = _RULES[degree]
    return pts.copy(), 0.5 * w / w.sum()


# ---------------------------------------------------------------------------
# reference basis functions in barycentric coordinates

_EDGE_VERTS = ((1, 2), (2, 0), (0, 1))


def p1_basis(bary):
    return np.asarray(bary, dtype=float).copy()


def p1_dbasis(bary):
    """d phi_k / d lambda_m, shape (npts, 3, 3)."""
    bary = np.atleast_2d(bary)
    return np.broadcast_to(np.eye(3), (len(bary), 3, 3)).copy()


def p2_basis(bary):
    """P2 shape functions: three vertex functions then three edge functions."""
    L = np.atleast_2d(np.asarray(bary, dtype=float))
    out = np.empty(L.shape[:-1] + (6,))
    for k in range(3):
        out[..., k] = L[..., k] * (2.0 * L[..., k] - 1.0)
    for k, (i, j) in enumerate(_EDGE_VERTS):
        out[..., 3 + k] = 4.0 * L[..., i] * L[..., j]
    return out


def p2_dbasis(bary):
    """d phi_k / d lambda_m, shape (npts, 6, 3)."""
    L = np.atleast_2d(np.asarray(bary, dtype=float))
    out = np.zeros(L.shape[:-1] + (6, 3))
    for k in range(3):
        out[..., k, k] = 4.0 * L[..., k] - 1.0
    for k, (i, j) in enumerate(_EDGE_VERTS):
        out[..., 3 + k, i] = 4.0 * L[..., j]
        out[..., 3 + k, j] = 4.0 * L[..., i]
    return out


# ---------------------------------------------------------------------------
# spaces and fields

KINDS = {"P1": (1, 1), "P2": (2, 1), "P2vec": (2, 2), "P2sym": (2, 3)}


class FunctionSpace:
    """Scalar Lagrange space, optionally repeated in component blocks.

    ``dof_count = ncomp * n_scalar``; component ``c`` occupies the slice
    ``[c * n_scalar, (c + 1) * n_scalar)``.
    """

    def __init__(self, mesh, kind):
        if kind not in KINDS:
            raise InvalidArgumentError(f"unknown space kind {kind!r}")
        self.mesh = mesh
        self.kind = kind
        self.degree, self.ncomp = KINDS[kind]
        if self.degree == 1:
            self.cell_dofs = mesh.triangles
            self.n_scalar = mesh.n_vertices
        else:
            self.cell_dofs = np.hstack([mesh.triangles, mesh.n_vertices + mesh.tri_edges])
            self.n_scalar = mesh.n_vertices + mesh.n_edges
        self.dof_count = self.ncomp * self.n_scalar

    @property
    def n_local(self):
        return self.cell_dofs.shape[1]

    def dof_coordinates(self):
        """Coordinates of the scalar nodal points (vertices, then edge midpoints)."""
        m = self.mesh
        if self.degree == 1:
            return m.vertices.copy()
        mid = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
        return np.vstack([m.vertices, mid])

    def boundary_dofs(self, markers):
        """Sorted scalar dofs on boundary edges with any of ``markers``."""
        m = self.mesh
        if isinstance(markers, str):
            markers = (markers,)
        edges = np.array(sorted(e for e, mk in m.boundary_edges.items() if mk in markers),
                         dtype=np.int64)
        if len(edges) == 0:
            return edges
        dofs = m.edges[edges].ravel()
        if self.degree == 2:
            dofs = np.concatenate([dofs, m.n_vertices + edges])
        return np.unique(dofs)

    def basis(self, bary):
        return p1_basis(bary) if self.degree == 1 else p2_basis(bary)

    def dbasis(self, bary):
        return p1_dbasis(bary) if self.degree == 1 else p2_dbasis(bary)

    def interpolate(self, *funcs):
        """Nodal interpolant; one callable ``f(x, y)`` per component."""
        if len(funcs) != self.ncomp:
            raise InvalidArgumentError(f"{self.kind} needs {self.ncomp} component functions")
        xy = self.dof_coordinates()
        vals = [np.broadcast_to(np.asarray(f(xy[:, 0], xy[:, 1]), dtype=float),
                                (self.n_scalar,)) for f in funcs]
        return Field(self, np.concatenate(vals))

    def zeros(self):
        return Field(self, np.zeros(self.dof_count))


@dataclass
class Field:
    """Degrees-of-freedom vector bound to a function space."""

    space: FunctionSpace
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.space.dof_count,):
            raise InvalidArgumentError(
                f"field has {self.values.shape} values, space expects {self.space.dof_count}")

    def component(self, c):
        n = self.space.n_scalar
        return self.values[c * n:(c + 1) * n]

    def components(self):
        return [self.component(c) for c in range(self.space.ncomp)]

    def copy(self):
        return Field(self.space, self.values.copy())


# ---------------------------------------------------------------------------
# evaluation at arbitrary points


def evaluate(field, triangle, bary):
    """Field value at one point (scalar, or array of components)."""
    sp_ = field.space
    phi = sp_.basis(np.asarray(bary)[None])[0]
    dofs = sp_.cell_dofs[triangle]
    vals = np.array([c[dofs] @ phi for c in field.components()])
    return vals[0] if sp_.ncomp == 1 else vals


def evaluate_gradient(field, triangle, bary):
    """Gradient at one point; shape (2,) for scalars, (ncomp, 2) otherwise."""
    sp_ = field.space
    m = sp_.mesh
    dphi = sp_.dbasis(np.asarray(bary)[None])[0]
    grad_lam = _grad_lambda(m)[triangle]
    g = dphi @ grad_lam
    dofs = sp_.cell_dofs[triangle]
    out = np.array([c[dofs] @ g for c in field.components()])
    return out[0] if sp_.ncomp == 1 else out


def evaluate_many(field, triangles, bary):
    """Values at many points, shape (npts,) or (npts, ncomp)."""
    sp_ = field.space
    phi = sp_.basis(bary)
    dofs = sp_.cell_dofs[triangles]
    out = np.stack([np.einsum("pk,pk->p", c[dofs], phi) for c in field.components()], axis=-1)
    return out[:, 0] if sp_.ncomp == 1 else out


def evaluate_at_points(field, pts):
    tris, bary = locate_points(field.space.mesh, pts)
    return evaluate_many(field, tris, bary)


def _grad_lambda(mesh):
    """Constant gradients of the barycentric coordinates, shape (nt, 3, 2)."""
    inv = mesh._tri_inv
    g1, g2 = inv[:, 0, :], inv[:, 1, :]
    return np.stack([-g1 - g2, g1, g2], axis=1)


# ---------------------------------------------------------------------------
# the discretisation context


class Discretization:
    """Mesh, spaces, quadrature tables and cached constant operators.

    Attributes
    ----------
    w : (nt, nq) ndarray
        Physical quadrature weights.
    xq : (nt, nq, 2) ndarray
        Physical quadrature points.
    phi2, phi1 : (nq, 6), (nq, 3)
        Reference basis values at quadrature points.
    dphi2 : (nt, nq, 6, 2)
        Physical P2 gradients at quadrature points.
    dphi1 : (nt, 3, 2)
        Constant P1 gradients.
    """

    def __init__(self, mesh, degree=5):
        self.mesh = mesh
        self.degree = degree
        self.P1 = FunctionSpace(mesh, "P1")
        self.P2 = FunctionSpace(mesh, "P2")
        self.P2vec = FunctionSpace(mesh, "P2vec")
        self.P2sym = FunctionSpace(mesh, "P2sym")

        self.qbary, wref = quadrature(degree)
        self.areas = mesh.triangle_areas()
        self.w = 2.0 * self.areas[:, None] * wref[None, :]
        p = mesh.vertices[mesh.triangles]
        self.xq = np.einsum("qk,tkd->tqd", self.qbary, p)

        self.grad_lambda = _grad_lambda(mesh)
        self.phi1 = p1_basis(self.qbary)
        self.phi2 = p2_basis(self.qbary)
        self.dphi1 = self.grad_lambda.copy()
        self.dphi2 = np.einsum("qkm,tmd->tqkd", p2_dbasis(self.qbary), self.grad_lambda)
        # reference derivatives, laid out for batched matrix products
        dref = p2_dbasis(self.qbary)
        nq = len(self.qbary)
        self._dref_flat = np.ascontiguousarray(dref.transpose(1, 0, 2).reshape(6, nq * 3))
        self._dref_T = np.ascontiguousarray(dref.transpose(0, 2, 1))
        self._grad_lambda_T = np.ascontiguousarray(self.grad_lambda.transpose(0, 2, 1))
        self._phi2_outer = np.einsum("qi,qj->qij", self.phi2, self.phi2).reshape(nq, 36)

        self._patterns = {}
        self._cache = {}

    # -- cached constant data ------------------------------------------------
    def cached(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def space(self, degree):
        return self.P1 if degree == 1 else self.P2

    # -- values at quadrature points -----------------------------------------
    def qp_values(self, values, degree=2):
        """Scalar dof vector -> values at quadrature points, (nt, nq)."""
        s = self.space(degree)
        phi = self.phi1 if degree == 1 else self.phi2
        return values[s.cell_dofs] @ phi.T

    def qp_gradients(self, values, degree=2):
        """Scalar dof vector -> gradients at quadrature points, (nt, nq, 2)."""
        if degree == 1:
            g = np.einsum("tk,tkd->td", values[self.P1.cell_dofs], self.dphi1)
            return np.broadcast_to(g[:, None, :], (len(g), len(self.qbary), 2))
        nt, nq = self.w.shape
        dl = (values[self.P2.cell_dofs] @ self._dref_flat).reshape(nt, nq, 3)
        return dl @ self.grad_lambda

    def directional(self, a):
        """``a . grad phi_k`` at quadrature points for a vector sampled there, (nt, nq, 6)."""
        b = a @ self._grad_lambda_T
        return np.matmul(b.transpose(1, 0, 2), self._dref_T).transpose(1, 0, 2)

    def field_at_qp(self, field):
        """Values at quadrature points, (nt, nq) or (nt, nq, ncomp)."""
        cols = [self.qp_values(c, field.space.degree) for c in field.components()]
        return cols[0] if field.space.ncomp == 1 else np.stack(cols, axis=-1)

    def integrate(self, f_qp):
        """Integral of quantities sampled at quadrature points."""
        return float(np.sum(self.w * f_qp))

    def integrate_function(self, f):
        """Integral of a callable ``f(x, y)`` via the quadrature rule."""
        return self.integrate(f(self.xq[..., 0], self.xq[..., 1]))

    def dof_weights(self, degree=2):
        """``integral of phi_i``: integrates a field as ``weights @ values``."""
        def build():
            phi = self.phi1 if degree == 1 else self.phi2
            local = self.w @ phi
            return assemble_vector(self.space(degree), local)
        return self.cached(("dof_weights", degree), build)

    def integral(self, values, degree=2):
        return float(self.dof_weights(degree) @ values)

    # -- assembly -------------------------------------------------------------
    def pattern(self, test_degree, trial_degree):
        key = (test_degree, trial_degree)
        if key not in self._patterns:
            self._patterns[key] = _Pattern(self.space(test_degree), self.space(trial_degree))
        return self._patterns[key]

    def assemble(self, local, test_degree=2, trial_degree=2):
        return self.pattern(test_degree, trial_degree).assemble(local)

    def mass(self, degree=2):
        return self.cached(("mass", degree),
                           lambda: self.assemble(mass_kernel(self, degree), degree, degree))

    def stiffness(self, degree=2):
        return self.cached(("stiffness", degree),
                           lambda: self.assemble(stiffness_kernel(self, degree), degree, degree))


class _Pattern:
    """Sparsity pattern of a (test space x trial space) matrix."""

    def __init__(self, test, trial):
        rows = np.broadcast_to(test.cell_dofs[:, :, None],
                               (len(test.cell_dofs), test.n_local, trial.n_local))
        cols = np.broadcast_to(trial.cell_dofs[:, None, :], rows.shape)
        keys = rows.ravel() * trial.n_scalar + cols.ravel()
        uniq, self.slot = np.unique(keys, return_inverse=True)
        self.slot = self.slot.ravel()
        r = uniq // trial.n_scalar
        self.indices = (uniq % trial.n_scalar).astype(np.int32)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=test.n_scalar))]).astype(np.int32)
        self.shape = (test.n_scalar, trial.n_scalar)
        self.nnz = len(uniq)
        self.local_shape = rows.shape

    def data(self, local):
        if local.shape != self.local_shape:
            raise InvalidArgumentError(
                f"local matrices have shape {local.shape}, expected {self.local_shape}")
        return np.bincount(self.slot, weights=local.ravel(), minlength=self.nnz)

    def matrix(self, data):
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)

    def assemble(self, local):
        return self.matrix(self.data(local))


def assemble(disc, local, test_degree=2, trial_degree=2):
    """Scatter-add of local element matrices into a global CSR matrix."""
    return disc.assemble(local, test_degree, trial_degree)


def assemble_vector(space, local):
    """Scatter-add of local element vectors (nt, nloc) for a scalar space."""
    return np.bincount(space.cell_dofs.ravel(), weights=np.asarray(local).ravel(),
                       minlength=space.n_scalar)


# ---------------------------------------------------------------------------
# element kernels


def _tables(disc, degree):
    if degree == 1:
        nt = disc.mesh.n_triangles
        return disc.phi1, np.broadcast_to(disc.dphi1[:, None], (nt, len(disc.qbary), 3, 2))
    return disc.phi2, disc.dphi2


def mass_kernel(disc, degree=2, coef=None):
    """Local ``(c phi_j, phi_i)``; ``coef`` sampled at quadrature points."""
    w = disc.w if coef is None else disc.w * coef
    if degree == 2:
        return (w @ disc._phi2_outer).reshape(-1, 6, 6)
    phi, _ = _tables(disc, degree)
    return np.einsum("tq,qi,qj->tij", w, phi, phi)


def stiffness_kernel(disc, degree=2, coef=None):
    """Local ``(c grad phi_j, grad phi_i)``."""
    _, dphi = _tables(disc, degree)
    w = disc.w if coef is None else disc.w * coef
    return np.einsum("tq,tqid,tqjd->tij", w, dphi, dphi)


def advection_trial_kernel(disc, a):
    """Local ``(a . grad phi_j, phi_i)`` for a vector field sampled at qp."""
    ag = disc.directional(a) * disc.w[..., None]
    return disc.phi2.T @ ag


def advection_test_kernel(disc, a):
    """Local ``(phi_j, a . grad phi_i)``."""
    return advection_trial_kernel(disc, a).transpose(0, 2, 1)


def load_kernel(disc, f_qp, degree=2):
    """Local ``(f, phi_i)``."""
    phi, _ = _tables(disc, degree)
    return (disc.w * f_qp) @ phi


def grad_load_kernel(disc, g_qp):
    """Local ``(g, grad phi_i)`` for a vector ``g`` sampled at qp (P2 tests)."""
    return disc.directional(g_qp * disc.w[..., None]).sum(axis=1)


# ---------------------------------------------------------------------------
# Dirichlet constraints


def merge_dirichlet(*groups):
    """Combine ``(dofs, values)`` pairs; a dof given two different values is an error."""
    table = {}
    for dofs, values in groups:
        values = np.broadcast_to(np.asarray(values, dtype=float), np.shape(dofs))
        for d, v in zip(np.asarray(dofs).tolist(), values.tolist()):
            if d in table and abs(table[d] - v) > 1e-12 * max(1.0, abs(v)):
                raise InvalidArgumentError(
                    f"conflicting Dirichlet values at dof {d}: {table[d]} vs {v}")
            table[d] = v
    dofs = np.array(sorted(table), dtype=np.int64)
    return dofs, np.array([table[d] for d in dofs.tolist()])


class DirichletConstraint:
    """Fast repeated constraint of matrices sharing one sparsity pattern.

    The symmetric variant zeroes constrained rows and columns, puts 1 on the
    diagonal and moves the known values to the right-hand side.
    """

    def __init__(self, A, dofs):
        A = sp.csr_matrix(A)
        self.dofs = np.asarray(dofs, dtype=np.int64)
        self.n = A.shape[0]
        mask = np.zeros(self.n, dtype=bool)
        mask[self.dofs] = True
        self.mask = mask
        rows = np.repeat(np.arange(self.n), np.diff(A.indptr))
        self.hit = mask[rows] | mask[A.indices]
        self.diag = np.nonzero((rows == A.indices) & mask[rows])[0]
        if len(self.diag) != len(self.dofs):
            raise InvalidArgumentError("constrained dofs need stored diagonal entries")

    def matrix(self, A):
        if A.nnz != len(self.hit):
            raise InvalidArgumentError("matrix does not share the constraint's sparsity pattern")
        data = A.data.copy()
        data[self.hit] = 0.0
        data[self.diag] = 1.0
        return sp.csr_matrix((data, A.indices, A.indptr), shape=A.shape)

    def rhs(self, A, b, values):
        b = np.array(b, dtype=float)
        if len(self.dofs) == 0:
            return b
        g = np.zeros(self.n)
        g[self.dofs] = values
        b -= A @ g
        b[self.dofs] = values
        return b


def apply_dirichlet(A, b, dofs, values, symmetric=True):
    """Impose ``x[dofs] = values`` on the system ``A x = b``.

    The non-symmetric variant only replaces constrained rows by identity rows;
    the symmetric one also clears the matching columns.
    """
    A = sp.csr_matrix(A, dtype=float, copy=True)
    dofs, values = merge_dirichlet((dofs, values))
    if symmetric:
        c = DirichletConstraint(A, dofs)
        return c.matrix(A), c.rhs(A, b, values)
    b = np.array(b, dtype=float)
    A = A.tolil()
    for d, v in zip(dofs, values):
        A.rows[d] = [d]
        A.data[d] = [1.0]
        b[d] = v
    return A.tocsr(), b
