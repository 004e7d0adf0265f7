import numpy as np
import pytest
import scipy.sparse as sp

from aceflow import fem, mms
from aceflow.fem import DirichletSet, p2_basis
from aceflow.mesh import Labeling, Mesh, build_structured_mesh
from aceflow.quadrature import collapsed_gauss


def reference_triangle_system():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    mesh = Mesh(v, np.array([[0, 1, 2]]), np.array([[0, 1], [1, 2], [2, 0]]), (None,) * 3, np.sqrt(2), 1, Labeling.MMS)
    return fem.FeSystem(mesh, "mms")


def lagrange_p2(points, nodes):
    """Independent P2 basis: solve the Vandermonde system on the six nodes."""
    def mono(p):
        x, y = p[..., 0], p[..., 1]
        return np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=-1)

    def dmono(p):
        x, y = p[..., 0], p[..., 1]
        z, o = np.zeros_like(x), np.ones_like(x)
        return np.stack([z, o, z, 2 * x, y, z], -1), np.stack([z, z, o, z, x, 2 * y], -1)

    C = np.linalg.inv(mono(nodes))
    dx, dy = dmono(points)
    return mono(points) @ C, np.stack([dx @ C, dy @ C], axis=-1)


def test_dof_counts():
    fe = fem.build_fe_system(build_structured_mesh(1), "cavity")
    assert fe.n_p2 == 9
    fe = fem.build_fe_system(build_structured_mesh(64), "cavity")
    # edges: 3 n^2 + 2 n, consistent with V - E + F = 1
    assert fe.n_p1 == 4225 and fe.n_p2 == 4225 + 3 * 64**2 + 2 * 64 == 16641


def test_dirichlet_sets(cavity8, mms8):
    fe, _ = cavity8
    x, y = fe.nodes_p2.T
    expected = np.flatnonzero((x == 0) | (x == 1))
    assert np.array_equal(np.sort(fe.temperature_dirichlet.indices), expected)
    vals = fe.temperature_dirichlet.full()[expected]
    assert np.all(vals == np.where(x[expected] == 0, 1.0, 0.0))
    bnd = np.flatnonzero((x == 0) | (x == 1) | (y == 0) | (y == 1))
    assert len(fe.velocity_dirichlet.indices) == 2 * len(bnd)
    fm, _ = mms8
    assert len(fm.temperature_dirichlet.indices) == len(bnd)


def test_cavity_requires_cavity_mesh():
    with pytest.raises(ValueError):
        fem.build_fe_system(build_structured_mesh(2, Labeling.MMS), "cavity")


def test_p1_reference_matrices():
    fe = reference_triangle_system()
    ops = fem.assemble_static_operators(fe)
    M = ops.M_p.toarray()
    K = fem.p1_stiffness(fe).toarray()
    assert np.abs(M - np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24).max() < 1e-14
    assert np.abs(K - 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])).max() < 1e-14


def test_static_operator_properties(cavity8):
    fe, ops = cavity8
    one = np.ones(fe.n_p2)
    assert np.abs(ops.K_T @ one).max() < 1e-12
    assert abs(one @ ops.M_T @ one - 1.0) < 1e-13
    rng = np.random.default_rng(0)
    for M in (ops.M_u, ops.M_p, ops.M_T):
        assert abs(M - M.T).max() < 1e-15
        for _ in range(100):
            x = rng.standard_normal(M.shape[0])
            assert x @ (M @ x) > 0
    for K in (ops.K_u, ops.K_T, ops.GD):
        assert abs(K - K.T).max() < 1e-12
        x = rng.standard_normal(K.shape[0])
        assert x @ (K @ x) >= -1e-10


def test_grad_div_of_linear_field(cavity8):
    fe, ops = cavity8
    u = np.concatenate([fe.interpolate_p2(lambda x, y: x), fe.interpolate_p2(lambda x, y: 2 * y)])
    assert abs(u @ ops.GD @ u - 9.0) < 1e-12  # (div u)^2 = 9 over the unit square
    assert abs(u @ ops.K_u @ u - 5.0) < 1e-12


def test_divergence_compatibility(cavity8):
    fe, ops = cavity8
    rng = np.random.default_rng(1)
    u = rng.standard_normal(fe.n_u)
    u = fe.velocity_dirichlet.impose(u)
    assert abs((ops.B @ u).sum()) < 1e-12
    lin = np.concatenate([fe.interpolate_p2(lambda x, y: x), np.zeros(fe.n_p2)])
    assert abs((ops.B @ lin).sum() - 1.0) < 1e-13


def test_convection_skew(cavity8):
    fe, _ = cavity8
    rng = np.random.default_rng(2)
    assert fem.assemble_convection(fe, np.zeros(fe.n_u), "temperature").count_nonzero() == 0
    for _ in range(20):
        w = rng.standard_normal(fe.n_u)
        for space in ("velocity", "temperature"):
            N = fem.assemble_convection(fe, w, space)
            assert abs(N + N.T).max() <= 1e-12
            x = rng.standard_normal(N.shape[0])
            assert abs(x @ (N @ x)) <= 1e-12 * sp.linalg.norm(N) * (x @ x)
    with pytest.raises(ValueError):
        fem.convection_data(fe, np.zeros(3))


def test_convection_constant_field_hand_quadrature():
    fe = fem.build_fe_system(build_structured_mesh(2), "cavity")
    w = np.concatenate([np.ones(fe.n_p2), np.zeros(fe.n_p2)])
    N = fem.assemble_convection(fe, w, "temperature").toarray()
    # one interior element: its contribution, recomputed from an independent basis
    rule = collapsed_gauss(6)
    t = 0
    cells = fe.cells_p2[t]
    corners = fe.mesh.vertices[fe.cells_p1[t]]
    pts = rule.barycentric @ corners
    phi, grad = lagrange_p2(pts, fe.nodes_p2[cells])
    area = 0.5 * abs(np.linalg.det(np.array([corners[1] - corners[0], corners[2] - corners[0]])))
    C = area * np.einsum("q,qa,qb->ab", rule.weights, phi, grad[..., 0])
    local = 0.5 * (C - C.T)
    # subtract contributions of every other element from the assembled matrix
    others = np.zeros_like(N)
    for s in range(1, fe.mesh.n_triangles):
        cs = fe.cells_p2[s]
        cn = fe.mesh.vertices[fe.cells_p1[s]]
        p = rule.barycentric @ cn
        ph, gr = lagrange_p2(p, fe.nodes_p2[cs])
        ar = 0.5 * abs(np.linalg.det(np.array([cn[1] - cn[0], cn[2] - cn[0]])))
        Cs = ar * np.einsum("q,qa,qb->ab", rule.weights, ph, gr[..., 0])
        others[np.ix_(cs, cs)] += 0.5 * (Cs - Cs.T)
    assert np.abs((N - others)[np.ix_(cells, cells)] - local).max() < 1e-14


def test_skew_form_identity_single_element():
    """Two-term skew form equals (u.grad v, w) + 1/2 ((div u) v, w)."""
    fe = reference_triangle_system()
    rng = np.random.default_rng(3)
    u = rng.standard_normal(fe.n_u)
    v = rng.standard_normal(fe.n_p2)
    w = rng.standard_normal(fe.n_p2)
    rule = collapsed_gauss(12)
    phi, dphi = p2_basis(rule.barycentric)
    grad = np.einsum("qak,kd->qad", dphi, fe.grad_lambda[0])
    loc = fe.cells_p2[0]
    ux, uy = (c[loc] for c in fe.split_velocity(u))
    v, w = v[loc], w[loc]
    U = np.stack([phi @ ux, phi @ uy], -1)
    divU = grad[..., 0] @ ux + grad[..., 1] @ uy
    V, W = phi @ v, phi @ w
    gV, gW = np.einsum("qad,a->qd", grad, v), np.einsum("qad,a->qd", grad, w)
    wts = 0.5 * rule.weights
    skew = 0.5 * wts @ (np.sum(U * gV, 1) * W) - 0.5 * wts @ (np.sum(U * gW, 1) * V)
    # boundary term of the integration by parts: 1/2 int (u.n) v w ds
    flux = 0.0
    gx, gw_ = np.polynomial.legendre.leggauss(8)
    s = 0.5 * (gx + 1)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        pa, pb = fe.mesh.vertices[a], fe.mesh.vertices[b]
        bary = np.zeros((len(s), 3))
        bary[:, a], bary[:, b] = 1 - s, s
        ph, _ = p2_basis(bary)
        edge = pb - pa
        normal = np.array([edge[1], -edge[0]])  # outward for counterclockwise order, length |edge|
        Ue = np.stack([ph @ ux, ph @ uy], -1)
        flux += 0.5 * (0.5 * gw_) @ ((Ue @ normal) * (ph @ v) * (ph @ w))
    other = wts @ (np.sum(U * gV, 1) * W) + 0.5 * wts @ (divU * V * W) - flux
    assert abs(skew - other) < 1e-12
    N = fem.assemble_convection(fe, u, "temperature")[loc][:, loc]
    assert abs(w @ (N @ v) - skew) < 1e-12


def test_load_vectors(mms8):
    fe, _ = mms8
    assert np.all(fem.assemble_load(fe, lambda x, y, t: (0.0, 0.0), 0.0) == 0)
    b = fem.assemble_load(fe, lambda x, y, t: (np.ones_like(x), 0.0), 0.0)
    assert abs(b[: fe.n_p2].sum() - 1.0) < 1e-14 and np.all(b[fe.n_p2 :] == 0)
    f, _ = mms.forcings(mms.ExactSolution(), 1.0, 100.0)
    lo = fem.assemble_load(fe, f, 0.0)
    hi = fem.assemble_load(fe, f, 0.0, rule=collapsed_gauss(10))
    assert np.linalg.norm(lo - hi) <= 1e-10


def test_buoyancy(cavity8):
    fe, ops = cavity8
    assert np.all(fem.assemble_buoyancy(fe, np.zeros(fe.n_p2)) == 0)
    b = fem.assemble_buoyancy(fe, np.ones(fe.n_p2))
    assert np.all(b[: fe.n_p2] == 0)
    assert abs(b[fe.n_p2 :].sum() - 1.0) < 1e-13
    assert np.allclose(b, fem.assemble_buoyancy(fe, np.ones(fe.n_p2), ops.M_T), atol=1e-15)


def test_apply_dirichlet_examples():
    A = sp.identity(2, format="csr")
    Ab, bb = fem.apply_dirichlet(A, np.array([1.0, 2.0]), DirichletSet([0], [5.0], 2))
    assert sp.linalg.spsolve(Ab.tocsc(), bb)[0] == 5.0
    A0, b0 = fem.apply_dirichlet(A, np.array([1.0, 2.0]), DirichletSet([], [], 2))
    assert (A0 != A).nnz == 0 and np.array_equal(b0, [1.0, 2.0])

    S = np.array([[4.0, 1.0, 0.5], [1.0, 3.0, 1.0], [0.5, 1.0, 2.0]])
    b = np.array([1.0, 2.0, 3.0])
    Ab, bb = fem.apply_dirichlet(sp.csr_matrix(S), b, DirichletSet([1], [0.7], 3))
    x = np.linalg.solve(Ab.toarray(), bb)
    free = [0, 2]
    ref = np.linalg.solve(S[np.ix_(free, free)], b[free] - S[free, 1] * 0.7)
    assert np.allclose(x[free], ref, atol=1e-14) and x[1] == 0.7
    assert abs(Ab - Ab.T).max() == 0  # symmetric elimination
