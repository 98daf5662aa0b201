"""Uniform triangulations of axis-aligned rectangles.

Every grid cell ``[x_i, x_{i+1}] x [y_j, y_{j+1}]`` is split along the
diagonal running from its lower-left to its upper-right corner, giving two
positively oriented triangles per cell.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidArgumentError

MARKERS = ("left", "right", "bottom", "top")

BARY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangular mesh of a rectangle.

    Attributes
    ----------
    vertices : (nv, 2) ndarray
    triangles : (nt, 3) ndarray
        Counter-clockwise vertex indices.
    edges : (ne, 2) ndarray
        Vertex pairs, lower index first. Edge ``e`` owns the quadratic
        midpoint degree of freedom ``nv + e``.
    tri_edges : (nt, 3) ndarray
        ``tri_edges[t, k]`` is the edge opposite local vertex ``k``.
    neighbors : (nt, 3) ndarray
        Triangle across the edge opposite local vertex ``k``, or -1.
    boundary_edges : dict
        Boundary edge index -> marker in :data:`MARKERS`.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray
    neighbors: np.ndarray
    boundary_edges: dict
    bounds: tuple
    shape: tuple
    _tri_inv: np.ndarray = field(repr=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def h(self):
        """Longest edge length (the cell diagonal for a uniform split)."""
        x0, x1, y0, y1 = self.bounds
        nx, ny = self.shape
        return float(np.hypot((x1 - x0) / nx, (y1 - y0) / ny))

    @property
    def area(self):
        x0, x1, y0, y1 = self.bounds
        return (x1 - x0) * (y1 - y0)

    def triangle_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edges_with_marker(self, marker):
        return np.array(sorted(e for e, m in self.boundary_edges.items() if m == marker),
                        dtype=np.int64)

    def boundary_vertices(self, markers):
        """Sorted vertex indices lying on edges carrying any of ``markers``."""
        if isinstance(markers, str):
            markers = (markers,)
        edges = [e for e, m in self.boundary_edges.items() if m in markers]
        if not edges:
            return np.zeros(0, dtype=np.int64)
        return np.unique(self.edges[edges].ravel())

    def barycentric(self, t, x):
        """Barycentric coordinates of point ``x`` with respect to triangle ``t``."""
        inv = self._tri_inv[t]
        p0 = self.vertices[self.triangles[t, 0]]
        l12 = inv @ (np.asarray(x, dtype=float) - p0)
        return np.array([1.0 - l12[0] - l12[1], l12[0], l12[1]])


def build_rectangle(nx, ny, x0=0.0, x1=1.0, y0=0.0, y1=1.0):
    """Uniform mesh of ``[x0, x1] x [y0, y1]`` with ``nx`` by ``ny`` cells."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise InvalidArgumentError(f"subdivisions must be positive integers, got {nx}, {ny}")
    if not (x1 > x0 and y1 > y0):
        raise InvalidArgumentError("rectangle must have positive extent")
    nx, ny = int(nx), int(ny)

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    I, J = I.ravel(), J.ravel()
    v00, v10, v11, v01 = vid(I, J), vid(I + 1, J), vid(I + 1, J + 1), vid(I, J + 1)
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    # local edge k is opposite local vertex k
    local = np.stack([triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]], axis=1)
    keys = np.sort(local, axis=2).reshape(-1, 2)
    edges, inverse = np.unique(keys, axis=0, return_inverse=True)
    tri_edges = inverse.reshape(-1, 3)

    nt = len(triangles)
    owner = np.full((len(edges), 2), -1, dtype=np.int64)
    count = np.zeros(len(edges), dtype=np.int64)
    for t in range(nt):
        for k in range(3):
            e = tri_edges[t, k]
            owner[e, count[e]] = t
            count[e] += 1
    neighbors = np.full((nt, 3), -1, dtype=np.int64)
    for t in range(nt):
        for k in range(3):
            a, b = owner[tri_edges[t, k]]
            neighbors[t, k] = b if a == t else a

    boundary_edges = {}
    tol = 1e-12 * max(x1 - x0, y1 - y0)
    for e in np.nonzero(count == 1)[0]:
        p = vertices[edges[e]]
        if np.all(np.abs(p[:, 0] - x0) <= tol):
            boundary_edges[int(e)] = "left"
        elif np.all(np.abs(p[:, 0] - x1) <= tol):
            boundary_edges[int(e)] = "right"
        elif np.all(np.abs(p[:, 1] - y0) <= tol):
            boundary_edges[int(e)] = "bottom"
        elif np.all(np.abs(p[:, 1] - y1) <= tol):
            boundary_edges[int(e)] = "top"

    p = vertices[triangles]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    tri_inv = np.linalg.inv(jac)

    return Mesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        tri_edges=tri_edges,
        neighbors=neighbors,
        boundary_edges=boundary_edges,
        bounds=(float(x0), float(x1), float(y0), float(y1)),
        shape=(nx, ny),
        _tri_inv=tri_inv,
    )


def build_unit_square(n):
    """Uniform mesh of the unit square with ``n`` cells per side (h = sqrt(2)/n)."""
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"n must be a positive integer, got {n}")
    return build_rectangle(n, n)


def _inside(bary):
    return bool(np.all(bary >= -BARY_TOL))


def _brute_force(mesh, x):
    best, best_min = -1, -np.inf
    for t in range(mesh.n_triangles):
        lam = mesh.barycentric(t, x)
        m = lam.min()
        if m > best_min:
            best, best_min = t, m
    if best_min < -BARY_TOL:
        raise DomainError(f"point {tuple(x)} lies outside the mesh")
    return best, mesh.barycentric(best, x)


def locate_point(mesh, x, hint=0):
    """Find the triangle containing ``x`` by a barycentric walk from ``hint``.

    Falls back to an exhaustive scan when the walk hits the boundary or cycles.

    Returns
    -------
    (int, ndarray)
        Triangle index and barycentric coordinates.
    """
    x = np.asarray(x, dtype=float)
    t = int(hint) if 0 <= hint < mesh.n_triangles else 0
    for _ in range(mesh.n_triangles):
        lam = mesh.barycentric(t, x)
        if _inside(lam):
            return t, lam
        k = int(np.argmin(lam))
        nxt = mesh.neighbors[t, k]
        if nxt < 0:
            break
        t = int(nxt)
    return _brute_force(mesh, x)


def locate_points(mesh, pts, hints=None):
    """Vectorised point location.

    On these structured meshes the owning cell follows from the coordinates
    directly; any point whose barycentric coordinates fail the tolerance check
    is re-located with :func:`locate_point` starting from ``hints``.
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    x0, x1, y0, y1 = mesh.bounds
    nx, ny = mesh.shape
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    fx = (pts[:, 0] - x0) / hx
    fy = (pts[:, 1] - y0) / hy
    i = np.clip(np.floor(fx).astype(np.int64), 0, nx - 1)
    j = np.clip(np.floor(fy).astype(np.int64), 0, ny - 1)
    upper = (fy - j) > (fx - i)
    tris = 2 * (j * nx + i) + upper.astype(np.int64)

    p0 = mesh.vertices[mesh.triangles[tris, 0]]
    l12 = np.einsum("nij,nj->ni", mesh._tri_inv[tris], pts - p0)
    bary = np.column_stack([1.0 - l12[:, 0] - l12[:, 1], l12[:, 0], l12[:, 1]])

    bad = np.nonzero(np.any(bary < -BARY_TOL, axis=1))[0]
    for p in bad:
        h = 0 if hints is None else int(np.ravel(hints)[p])
        tris[p], bary[p] = locate_point(mesh, pts[p], h)
    return tris, bary
