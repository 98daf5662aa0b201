import numpy as np
import pytest

from vehd.errors import DomainError, InvalidArgumentError
from vehd.mesh import build_rectangle, build_unit_square, locate_point, locate_points


def brute_force_locate(mesh, x):
    """Return every triangle whose closed hull contains x."""
    hits = []
    for t in range(mesh.n_triangles):
        lam = mesh.barycentric(t, x)
        if np.all(lam >= -1e-12):
            hits.append(t)
    return hits


def test_counts_small_meshes():
    m1 = build_unit_square(1)
    assert (m1.n_vertices, m1.n_triangles) == (4, 2)
    assert np.isclose(m1.triangle_areas().sum(), 1.0)
    m2 = build_unit_square(2)
    assert (m2.n_vertices, m2.n_triangles, m2.n_edges) == (9, 8, 16)


@pytest.mark.parametrize("n", [1, 3, 7, 64])
def test_general_counts_and_h(n):
    m = build_unit_square(n)
    assert m.n_vertices == (n + 1) ** 2
    assert m.n_triangles == 2 * n * n
    assert m.n_edges == 3 * n * n + 2 * n
    assert np.isclose(m.h, np.sqrt(2) / n)


def test_zero_subdivisions_rejected():
    with pytest.raises(InvalidArgumentError):
        build_unit_square(0)


@pytest.mark.parametrize("n", [1, 5, 12])
def test_orientation_area_and_edge_sharing(n):
    m = build_rectangle(n, n + 2, -1.0, 2.0, 0.5, 1.5)
    areas = m.triangle_areas()
    assert np.all(areas > 0)
    assert abs(areas.sum() - m.area) <= 1e-13 * m.area
    counts = np.bincount(m.tri_edges.ravel(), minlength=m.n_edges)
    boundary = set(m.boundary_edges)
    for e, c in enumerate(counts):
        assert c == (1 if e in boundary else 2)


def test_boundary_markers_and_priority():
    m = build_unit_square(4)
    for e, marker in m.boundary_edges.items():
        p = m.vertices[m.edges[e]]
        if np.allclose(p[:, 0], 0):
            assert marker == "left"
        elif np.allclose(p[:, 0], 1):
            assert marker == "right"
        elif np.allclose(p[:, 1], 0):
            assert marker == "bottom"
        else:
            assert np.allclose(p[:, 1], 1) and marker == "top"
    # every side has n edges
    for marker in ("left", "right", "bottom", "top"):
        assert len(m.edges_with_marker(marker)) == 4


def test_locate_centroid_of_first_triangle():
    m = build_unit_square(3)
    c = m.vertices[m.triangles[0]].mean(axis=0)
    t, lam = locate_point(m, c, 0)
    assert t == 0
    np.testing.assert_allclose(lam, [1 / 3, 1 / 3, 1 / 3], atol=1e-14)


def test_locate_shared_edge_midpoint():
    m = build_unit_square(3)
    # diagonal of cell (1, 1) is shared by triangles 8 and 9
    mid = np.array([1.5, 1.5]) / 3
    t, lam = locate_point(m, mid, 0)
    assert t in (8, 9)
    assert np.isclose(np.min(np.abs(lam)), 0.0, atol=1e-12)
    assert abs(lam.sum() - 1) <= 1e-12


def test_locate_matches_brute_force():
    m = build_unit_square(8)
    rng = np.random.default_rng(42)
    pts = rng.uniform(0, 1, size=(1000, 2))
    tris, bary = locate_points(m, pts)
    for k, x in enumerate(pts):
        t_walk, lam = locate_point(m, x, hint=int(rng.integers(m.n_triangles)))
        hits = brute_force_locate(m, x)
        assert t_walk in hits and tris[k] in hits
        assert np.all(lam >= -1e-12) and np.all(lam <= 1 + 1e-12)
        assert abs(lam.sum() - 1) <= 1e-12
        np.testing.assert_allclose(m.vertices[m.triangles[tris[k]]].T @ bary[k], x, atol=1e-13)


def test_locate_corners_and_outside():
    m = build_unit_square(4)
    for x in ([0, 0], [1, 1], [1, 0], [0, 1]):
        t, lam = locate_point(m, np.array(x, float))
        assert np.isclose(lam.max(), 1.0)
    with pytest.raises(DomainError):
        locate_point(m, np.array([1.5, 0.5]))
    with pytest.raises(DomainError):
        locate_points(m, np.array([[-0.1, 0.5]]))
