"""Structured triangulations of the unit square with labeled boundaries."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class BoundaryLabel(enum.Enum):
    HOT_WALL = "hot"
    COLD_WALL = "cold"
    ADIABATIC = "adiabatic"
    FULL_DIRICHLET = "dirichlet"


class Labeling(enum.Enum):
    """How the four sides of the square are labeled."""

    CAVITY = "cavity"
    MMS = "mms"


@dataclass(frozen=True)
class Mesh:
    """Immutable triangle mesh.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    boundary_edges : (nb, 2) int array of vertex pairs
    boundary_labels : tuple of BoundaryLabel, one per boundary edge
    h_max : float
        Longest edge over all triangles.
    n : int
        Cells per side (structured meshes only).
    labeling : Labeling
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_labels: tuple
    h_max: float
    n: int
    labeling: Labeling

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        """Signed areas of all triangles."""
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique edges and the triangle-to-edge map.

        Returns
        -------
        edges : (ne, 2) int array, each row sorted ascending
        tri_edges : (nt, 3) int array; local edge k joins local vertices
            (k, (k+1) % 3)
        """
        local = np.array([[0, 1], [1, 2], [2, 0]])
        pairs = np.sort(self.triangles[:, local], axis=2).reshape(-1, 2)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        return edges, inverse.reshape(-1, 3)


def mesh_size(mesh: Mesh) -> float:
    """Maximum over triangles of the longest edge length."""
    p = mesh.vertices[mesh.triangles]
    lengths = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
    return float(lengths.max())


def _label_for(side: str, labeling: Labeling) -> BoundaryLabel:
    if labeling is Labeling.MMS:
        return BoundaryLabel.FULL_DIRICHLET
    return {
        "left": BoundaryLabel.HOT_WALL,
        "right": BoundaryLabel.COLD_WALL,
        "bottom": BoundaryLabel.ADIABATIC,
        "top": BoundaryLabel.ADIABATIC,
    }[side]


def build_structured_mesh(n: int, labeling: Labeling | str = Labeling.CAVITY) -> Mesh:
    """Divide [0,1]^2 into n x n squares, each split by its bottom-left to
    top-right diagonal.

    Vertex (i, j) sits at (i/n, j/n) with index j*(n+1) + i.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    labeling = Labeling(labeling)

    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    k = np.arange(n)
    sides = {
        "bottom": np.column_stack([k, k + 1]),
        "right": np.column_stack([k * (n + 1) + n, (k + 1) * (n + 1) + n]),
        "top": np.column_stack([n * (n + 1) + k + 1, n * (n + 1) + k]),
        "left": np.column_stack([(k + 1) * (n + 1), k * (n + 1)]),
    }
    boundary_edges = np.vstack(list(sides.values()))
    labels = tuple(_label_for(name, labeling) for name, e in sides.items() for _ in range(len(e)))

    mesh = Mesh(
        vertices=vertices,
        triangles=triangles,
        boundary_edges=boundary_edges,
        boundary_labels=labels,
        h_max=0.0,
        n=n,
        labeling=labeling,
    )
    object.__setattr__(mesh, "h_max", mesh_size(mesh))
    return mesh


def write_vtk(path, mesh: Mesh, point_data: dict | None = None, title: str = "aceflow") -> None:
    """Write a legacy ASCII VTK unstructured grid of the linear mesh.

    ``point_data`` maps names to per-vertex scalar arrays or (nv, 2) vectors.
    """
    nv = mesh.n_vertices
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {nv} double")
    lines.extend(f"{x:.16e} {y:.16e} 0.0" for x, y in mesh.vertices)
    nt = mesh.n_triangles
    lines.append(f"CELLS {nt} {4 * nt}")
    lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.triangles)
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)
    if point_data:
        lines.append(f"POINT_DATA {nv}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(f"{v:.16e}" for v in values[:nv])
            else:
                lines.append(f"VECTORS {name} double")
                lines.extend(f"{a:.16e} {b:.16e} 0.0" for a, b in values[:nv])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
