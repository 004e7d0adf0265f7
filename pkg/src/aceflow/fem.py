"""Taylor-Hood (P2-P1) velocity/pressure and P2 temperature on a triangle mesh.

Velocity dofs are stored component-blocked: component ``c`` of P2 node ``i``
is dof ``c * n_p2 + i``. All velocity operators share one CSR sparsity
pattern (the full 2x2 block pattern), and all temperature operators share the
scalar P2 pattern, so linear combinations reduce to sums of ``data`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .mesh import BoundaryLabel, Labeling, Mesh
from .quadrature import TriangleRule, dunavant_16, strang_fix_7

# local P2 node k >= 3 sits on the edge joining these local vertices
_EDGE_VERTS = ((0, 1), (1, 2), (2, 0))


def p2_basis(bary: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """P2 shape functions and their barycentric derivatives.

    Returns ``phi`` of shape (nq, 6) and ``dphi`` of shape (nq, 6, 3) with
    ``dphi[q, a, k] = d phi_a / d lambda_k``.
    """
    L = np.atleast_2d(bary)
    nq = len(L)
    phi = np.empty((nq, 6))
    dphi = np.zeros((nq, 6, 3))
    for a in range(3):
        phi[:, a] = L[:, a] * (2.0 * L[:, a] - 1.0)
        dphi[:, a, a] = 4.0 * L[:, a] - 1.0
    for e, (a, b) in enumerate(_EDGE_VERTS):
        phi[:, 3 + e] = 4.0 * L[:, a] * L[:, b]
        dphi[:, 3 + e, a] = 4.0 * L[:, b]
        dphi[:, 3 + e, b] = 4.0 * L[:, a]
    return phi, dphi


@dataclass
class DirichletSet:
    """Constrained dof indices and their prescribed values."""

    indices: np.ndarray
    values: np.ndarray
    size: int

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.broadcast_to(np.asarray(self.values, dtype=float), self.indices.shape).copy()
        self.mask = np.zeros(self.size, dtype=bool)
        self.mask[self.indices] = True

    def with_values(self, values) -> "DirichletSet":
        return DirichletSet(self.indices, values, self.size)

    def full(self) -> np.ndarray:
        """Prescribed values scattered into a zero vector."""
        g = np.zeros(self.size)
        g[self.indices] = self.values
        return g

    def impose(self, x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=float)
        x[self.indices] = self.values
        return x


class _Pattern:
    """CSR pattern plus the scatter map from element-local entries."""

    def __init__(self, rows_dofs: np.ndarray, cols_dofs: np.ndarray, shape: tuple[int, int]):
        nr, nc = rows_dofs.shape[1], cols_dofs.shape[1]
        r = np.repeat(rows_dofs[:, :, None], nc, axis=2).ravel()
        c = np.repeat(cols_dofs[:, None, :], nr, axis=1).ravel()
        keys = r.astype(np.int64) * shape[1] + c
        uniq, inv = np.unique(keys, return_inverse=True)
        self.shape = shape
        self.indices = (uniq % shape[1]).astype(np.int32)
        counts = np.bincount(uniq // shape[1], minlength=shape[0])
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.scatter = inv.ravel()
        self.nnz = len(uniq)

    def data(self, local: np.ndarray) -> np.ndarray:
        return np.bincount(self.scatter, weights=local.ravel(), minlength=self.nnz)

    def matrix(self, data: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)


class FeSystem:
    """Dof maps, geometry, quadrature tables and Dirichlet sets.

    Parameters
    ----------
    mesh : Mesh
    problem_kind : {"cavity", "mms"}
        Decides which temperature dofs are constrained. The cavity problem
        holds T = 1 on the hot wall (x = 0) and T = 0 on the cold wall
        (x = 1); corner nodes belong to those walls.
    """

    def __init__(self, mesh: Mesh, problem_kind: str = "cavity"):
        if problem_kind not in ("cavity", "mms"):
            raise ValueError(f"unknown problem kind {problem_kind!r}")
        self.mesh = mesh
        self.problem_kind = problem_kind

        edges, tri_edges = mesh.edges()
        nv = mesh.n_vertices
        self.n_p1 = nv
        self.n_edges = len(edges)
        self.n_p2 = nv + len(edges)
        self.n_u = 2 * self.n_p2
        self.cells_p1 = mesh.triangles.astype(np.int64)
        self.cells_p2 = np.hstack([self.cells_p1, nv + tri_edges]).astype(np.int64)
        self.nodes_p2 = np.vstack([mesh.vertices, mesh.vertices[edges].mean(axis=1)])

        # geometry: physical gradients of barycentric coordinates
        p = mesh.vertices[self.cells_p1]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        self.area = 0.5 * det
        if np.any(self.area <= 0):
            raise ValueError("mesh has non-positive triangle areas")
        grad_l = np.empty((len(p), 3, 2))
        grad_l[:, 1] = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
        grad_l[:, 2] = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
        grad_l[:, 0] = -grad_l[:, 1] - grad_l[:, 2]
        self.grad_lambda = grad_l

        self.matrix_rule = strang_fix_7()
        self.load_rule = dunavant_16()
        self._tables = {}

        # patterns
        self.pattern_p2 = _Pattern(self.cells_p2, self.cells_p2, (self.n_p2, self.n_p2))
        self.pattern_p1 = _Pattern(self.cells_p1, self.cells_p1, (self.n_p1, self.n_p1))
        self.pattern_div = _Pattern(
            self.cells_p1,
            np.hstack([self.cells_p2, self.cells_p2 + self.n_p2]),
            (self.n_p1, self.n_u),
        )
        self._build_vector_pattern()
        self._build_dirichlet()

    # ------------------------------------------------------------------ tables
    def tables(self, rule: TriangleRule) -> dict:
        """Basis values and physical gradients at the points of ``rule``."""
        key = id(rule)
        if key not in self._tables:
            phi, dphi = p2_basis(rule.barycentric)
            grad = np.einsum("qak,tkd->tqad", dphi, self.grad_lambda)
            xq = np.einsum("qk,tkd->tqd", rule.barycentric, self.mesh.vertices[self.cells_p1])
            self._tables[key] = {
                "phi2": phi,
                "grad2": grad,
                "phi1": rule.barycentric,
                "xq": xq,
                "wdet": self.area[:, None] * rule.weights[None, :],
                "rule": rule,
            }
        return self._tables[key]

    def _build_vector_pattern(self):
        s = self.pattern_p2.nnz
        blocks = []
        for b in range(4):
            blk = self.pattern_p2.matrix(np.arange(s, dtype=float) + b * s + 1.0)
            blocks.append(blk)
        V = sp.bmat([[blocks[0], blocks[1]], [blocks[2], blocks[3]]], format="csr")
        V.sort_indices()
        self.vector_perm = V.data.astype(np.int64) - 1
        self.vector_indptr = V.indptr.astype(np.int32)
        self.vector_indices = V.indices.astype(np.int32)
        self.vector_nnz = V.nnz

    def vector_data(self, b00, b01=None, b10=None, b11=None) -> np.ndarray:
        """Combine four scalar-pattern blocks into the velocity pattern."""
        s = self.pattern_p2.nnz
        z = np.zeros(s)
        cat = np.concatenate([b00, z if b01 is None else b01, z if b10 is None else b10, b00 if b11 is None else b11])
        return cat[self.vector_perm]

    def vector_matrix(self, data: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix((data, self.vector_indices, self.vector_indptr), shape=(self.n_u, self.n_u))

    # -------------------------------------------------------------- dirichlet
    def boundary_nodes(self) -> np.ndarray:
        x, y = self.nodes_p2.T
        return np.flatnonzero((x == 0.0) | (x == 1.0) | (y == 0.0) | (y == 1.0))

    def _build_dirichlet(self):
        bnd = self.boundary_nodes()
        self.velocity_dirichlet = DirichletSet(np.concatenate([bnd, bnd + self.n_p2]), 0.0, self.n_u)
        x = self.nodes_p2[:, 0]
        if self.problem_kind == "cavity":
            labels = set(self.mesh.boundary_labels)
            if BoundaryLabel.HOT_WALL not in labels or BoundaryLabel.COLD_WALL not in labels:
                raise ValueError("cavity problem needs a cavity-labeled mesh")
            hot = np.flatnonzero(x == 0.0)
            cold = np.flatnonzero(x == 1.0)
            idx = np.concatenate([hot, cold])
            vals = np.concatenate([np.ones(len(hot)), np.zeros(len(cold))])
            order = np.argsort(idx)
            self.hot_nodes, self.cold_nodes = hot, cold
            self.temperature_dirichlet = DirichletSet(idx[order], vals[order], self.n_p2)
        else:
            self.hot_nodes = self.cold_nodes = np.empty(0, dtype=np.int64)
            self.temperature_dirichlet = DirichletSet(bnd, 0.0, self.n_p2)

    @property
    def dof_counts(self) -> dict:
        return {"p1": self.n_p1, "p2": self.n_p2, "velocity": self.n_u, "pressure": self.n_p1, "temperature": self.n_p2}

    # ------------------------------------------------------------- utilities
    def eval_p2(self, coeffs: np.ndarray, rule: TriangleRule | None = None) -> np.ndarray:
        """Values of a scalar P2 field at quadrature points, (nt, nq)."""
        tab = self.tables(rule or self.matrix_rule)
        return np.einsum("qa,ta->tq", tab["phi2"], coeffs[self.cells_p2])

    def eval_p1(self, coeffs: np.ndarray, rule: TriangleRule | None = None) -> np.ndarray:
        tab = self.tables(rule or self.matrix_rule)
        return np.einsum("qa,ta->tq", tab["phi1"], coeffs[self.cells_p1])

    def split_velocity(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return u[: self.n_p2], u[self.n_p2 :]

    def interpolate_p2(self, fn) -> np.ndarray:
        x, y = self.nodes_p2.T
        return np.asarray(fn(x, y), dtype=float) * np.ones(self.n_p2)

    def interpolate_p1(self, fn) -> np.ndarray:
        x, y = self.mesh.vertices.T
        return np.asarray(fn(x, y), dtype=float) * np.ones(self.n_p1)


def build_fe_system(mesh: Mesh, problem_kind: str = "cavity") -> FeSystem:
    if problem_kind == "cavity" and mesh.labeling is not Labeling.CAVITY:
        raise ValueError("cavity problem needs a cavity-labeled mesh")
    return FeSystem(mesh, problem_kind)


@dataclass
class SparseOperatorSet:
    """Static operators. Velocity matrices live in ``fe.vector_*`` pattern,
    temperature matrices in ``fe.pattern_p2``; ``*_data`` hold raw data arrays
    in those patterns for cheap linear combination."""

    M_u: sp.csr_matrix
    K_u: sp.csr_matrix
    GD: sp.csr_matrix
    B: sp.csr_matrix
    M_p: sp.csr_matrix
    M_T: sp.csr_matrix
    K_T: sp.csr_matrix
    M_u_data: np.ndarray
    K_u_data: np.ndarray
    GD_data: np.ndarray
    M_T_data: np.ndarray
    K_T_data: np.ndarray


def _local_mass(tab) -> np.ndarray:
    return np.einsum("tq,qa,qb->tab", tab["wdet"], tab["phi2"], tab["phi2"])


def _local_grad(tab, i: int, j: int) -> np.ndarray:
    """Local matrix of integral d_j(phi_b) d_i(phi_a)."""
    g = tab["grad2"]
    return np.einsum("tq,tqa,tqb->tab", tab["wdet"], g[..., i], g[..., j])


def assemble_static_operators(fe: FeSystem) -> SparseOperatorSet:
    tab = fe.tables(fe.matrix_rule)
    m2 = fe.pattern_p2.data(_local_mass(tab))
    kxx = fe.pattern_p2.data(_local_grad(tab, 0, 0))
    kyy = fe.pattern_p2.data(_local_grad(tab, 1, 1))
    kxy = fe.pattern_p2.data(_local_grad(tab, 0, 1))
    kyx = fe.pattern_p2.data(_local_grad(tab, 1, 0))
    k2 = kxx + kyy

    mu = fe.vector_data(m2)
    ku = fe.vector_data(k2)
    gd = fe.vector_data(kxx, kxy, kyx, kyy)

    # B_ij = (q_i, div phi_j)
    g = tab["grad2"]
    bx = np.einsum("tq,qa,tqb->tab", tab["wdet"], tab["phi1"], g[..., 0])
    by = np.einsum("tq,qa,tqb->tab", tab["wdet"], tab["phi1"], g[..., 1])
    B = fe.pattern_div.matrix(fe.pattern_div.data(np.concatenate([bx, by], axis=2)))

    mp_local = np.einsum("tq,qa,qb->tab", tab["wdet"], tab["phi1"], tab["phi1"])
    M_p = fe.pattern_p1.matrix(fe.pattern_p1.data(mp_local))

    return SparseOperatorSet(
        M_u=fe.vector_matrix(mu),
        K_u=fe.vector_matrix(ku),
        GD=fe.vector_matrix(gd),
        B=B,
        M_p=M_p,
        M_T=fe.pattern_p2.matrix(m2),
        K_T=fe.pattern_p2.matrix(k2),
        M_u_data=mu,
        K_u_data=ku,
        GD_data=gd,
        M_T_data=m2,
        K_T_data=k2,
    )


def p1_stiffness(fe: FeSystem) -> sp.csr_matrix:
    """Stiffness matrix of the P1 (pressure) space; gradients are constant per
    triangle so no quadrature is needed."""
    g = fe.grad_lambda
    local = fe.area[:, None, None] * np.einsum("tad,tbd->tab", g, g)
    return fe.pattern_p1.matrix(fe.pattern_p1.data(local))


def convection_data(fe: FeSystem, w: np.ndarray, backend: str | None = None) -> np.ndarray:
    """Scalar skew-convection data in the P2 pattern.

    Entry (i, j) is 1/2 (w . grad phi_j, phi_i) - 1/2 (w . grad phi_i, phi_j).
    Each element contributes an exactly antisymmetric local matrix, so the
    assembled matrix is exactly skew.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (fe.n_u,):
        raise ValueError(f"convecting field has length {w.shape}, expected {(fe.n_u,)}")
    tab = fe.tables(fe.matrix_rule)
    wx, wy = fe.split_velocity(w)
    return kernels.backend(backend).skew_convection(
        fe.cells_p2,
        fe.pattern_p2.scatter,
        np.ascontiguousarray(wx),
        np.ascontiguousarray(wy),
        tab["phi2"],
        tab["grad2"],
        tab["wdet"],
        fe.pattern_p2.nnz,
    )


def assemble_convection(fe: FeSystem, w: np.ndarray, space: str = "velocity") -> sp.csr_matrix:
    """Skew-symmetric convection matrix N(w) for velocity or temperature."""
    s = convection_data(fe, w)
    if space == "velocity":
        return fe.vector_matrix(fe.vector_data(s))
    if space == "temperature":
        return fe.pattern_p2.matrix(s)
    raise ValueError(f"unknown space {space!r}")


def assemble_load(fe: FeSystem, f, t: float = 0.0, space: str = "velocity", rule: TriangleRule | None = None) -> np.ndarray:
    """Load vector (f(t), phi_i).

    ``f(x, y, t)`` returns a pair (fx, fy) for velocity or a scalar field for
    temperature, evaluated on arrays of points.
    """
    tab = fe.tables(rule or fe.load_rule)
    x, y = tab["xq"][..., 0], tab["xq"][..., 1]
    vals = f(x, y, t)
    cells = fe.cells_p2.ravel()

    def project(v):
        v = np.broadcast_to(np.asarray(v, dtype=float), x.shape)
        loc = np.einsum("tq,tq,qa->ta", tab["wdet"], v, tab["phi2"])
        return np.bincount(cells, weights=loc.ravel(), minlength=fe.n_p2)

    if space == "velocity":
        fx, fy = vals
        return np.concatenate([project(fx), project(fy)])
    if space == "temperature":
        return project(vals)
    raise ValueError(f"unknown space {space!r}")


def assemble_buoyancy(fe: FeSystem, T: np.ndarray, M_T: sp.csr_matrix | None = None) -> np.ndarray:
    """(xi T, phi_i) with gravity direction xi = (0, 1); unscaled by Pr Ra."""
    T = np.asarray(T, dtype=float)
    if T.shape != (fe.n_p2,):
        raise ValueError("temperature vector has wrong length")
    if M_T is None:
        tab = fe.tables(fe.matrix_rule)
        M_T = fe.pattern_p2.matrix(fe.pattern_p2.data(_local_mass(tab)))
    out = np.zeros(fe.n_u)
    out[fe.n_p2 :] = M_T @ T
    return out


# ------------------------------------------------------------------ dirichlet
def constrain_matrix(A: sp.csr_matrix, bc: DirichletSet) -> sp.csr_matrix:
    """Identity rows and zeroed columns on constrained dofs; pattern kept."""
    A = A.tocsr().copy()
    rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    hit = bc.mask[rows] | bc.mask[A.indices]
    A.data[hit] = 0.0
    A.data[hit & (rows == A.indices)] = 1.0
    return A


def constrain_rhs(A: sp.csr_matrix, b: np.ndarray, bc: DirichletSet) -> np.ndarray:
    """Move known values to the right-hand side; ``A`` is the unconstrained matrix."""
    b = np.array(b, dtype=float)
    if bc.indices.size:
        g = bc.full()
        b -= A @ g
        b[bc.indices] = bc.values
    return b


def apply_dirichlet(A: sp.csr_matrix, b: np.ndarray, bc: DirichletSet) -> tuple[sp.csr_matrix, np.ndarray]:
    if bc.indices.size == 0:
        return A.tocsr(), np.array(b, dtype=float)
    return constrain_matrix(A, bc), constrain_rhs(A, b, bc)


def l2_norm(M: sp.csr_matrix, x: np.ndarray) -> float:
    return float(np.sqrt(max(x @ (M @ x), 0.0)))


def zero_mean(M_p: sp.csr_matrix, p: np.ndarray, ones_weight: np.ndarray | None = None) -> np.ndarray:
    """Subtract the mass-weighted average from a P1 pressure vector."""
    w = M_p @ np.ones(M_p.shape[0]) if ones_weight is None else ones_weight
    return p - (w @ p) / w.sum()
