import math

import numpy as np
import pytest

from aceflow.mesh import BoundaryLabel, Labeling, build_structured_mesh, mesh_size, write_vtk


@pytest.mark.parametrize("n,nv,nt", [(1, 4, 2), (2, 9, 8), (64, 4225, 8192)])
def test_counts(n, nv, nt):
    m = build_structured_mesh(n)
    assert m.n_vertices == nv and m.n_triangles == nt
    assert math.isclose(m.h_max, math.sqrt(2) / n, rel_tol=1e-14)


@pytest.mark.parametrize("n", [1, 8])
def test_mesh_size(n):
    assert math.isclose(mesh_size(build_structured_mesh(n)), math.sqrt(2) / n, rel_tol=1e-14)


def test_rejects_zero():
    with pytest.raises(ValueError):
        build_structured_mesh(0)


@pytest.mark.parametrize("n", [1, 2, 3, 7, 16, 64])
def test_area_euler_and_orientation(n):
    m = build_structured_mesh(n)
    a = m.areas()
    assert np.all(a > 0)
    assert abs(a.sum() - 1.0) < 1e-12
    edges, _ = m.edges()
    assert m.n_vertices - len(edges) + m.n_triangles == 1
    assert len(edges) == 3 * n * n + 2 * n


def test_diagonals_same_direction():
    m = build_structured_mesh(4)
    p = m.vertices[m.triangles]
    # every triangle contains a bottom-left to top-right diagonal of its cell
    lo = p.min(axis=1)
    hi = p.max(axis=1)
    for tri, a, b in zip(p, lo, hi):
        pts = {tuple(v) for v in tri}
        assert tuple(a) in pts and tuple(b) in pts


def test_boundary_edges_cover_boundary_once():
    n = 5
    m = build_structured_mesh(n)
    edges, tri_edges = m.edges()
    counts = np.bincount(tri_edges.ravel(), minlength=len(edges))
    boundary = {tuple(sorted(e)) for e in m.boundary_edges}
    assert len(boundary) == 4 * n == len(m.boundary_edges)
    for k, e in enumerate(edges):
        assert (counts[k] == 1) == (tuple(e) in boundary)
    total = sum(np.linalg.norm(m.vertices[a] - m.vertices[b]) for a, b in m.boundary_edges)
    assert abs(total - 4.0) < 1e-12


def test_cavity_labels():
    m = build_structured_mesh(4)
    v = m.vertices
    for (a, b), lab in zip(m.boundary_edges, m.boundary_labels):
        xs, ys = v[[a, b], 0], v[[a, b], 1]
        if np.all(xs == 0):
            assert lab is BoundaryLabel.HOT_WALL
        elif np.all(xs == 1):
            assert lab is BoundaryLabel.COLD_WALL
        else:
            assert np.all(ys == ys[0]) and lab is BoundaryLabel.ADIABATIC


def test_mms_labels():
    m = build_structured_mesh(3, Labeling.MMS)
    assert set(m.boundary_labels) == {BoundaryLabel.FULL_DIRICHLET}


def test_vtk(tmp_path):
    m = build_structured_mesh(2)
    path = tmp_path / "m.vtk"
    write_vtk(path, m, {"s": np.arange(9.0), "v": np.ones((9, 2))})
    text = path.read_text()
    assert "POINTS 9 double" in text and "CELLS 8 32" in text and "VECTORS v double" in text
