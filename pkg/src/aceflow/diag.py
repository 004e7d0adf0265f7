"""Quantities of interest and error tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import fem
from .fem import FeSystem, p2_basis
from .mesh import BoundaryLabel

WALLS = {"hot": (0.0, BoundaryLabel.HOT_WALL), "cold": (1.0, BoundaryLabel.COLD_WALL)}
MIDLINES = ("horizontal_at_x_half", "vertical_at_y_half")
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(3)


@dataclass
class TimeSeries:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)


# ------------------------------------------------------------------ Nusselt
def _wall_segments(fe: FeSystem, wall: str):
    if wall not in WALLS:
        raise ValueError(f"unknown wall {wall!r}")
    x0, label = WALLS[wall]
    if label not in fe.mesh.boundary_labels:
        raise ValueError(f"mesh has no {wall} wall")
    verts = fe.mesh.vertices
    on = verts[fe.cells_p1][..., 0] == x0
    tris = np.flatnonzero(on.sum(axis=1) == 2)
    return x0, tris, on[tris]


def _wall_trace(fe: FeSystem, T: np.ndarray, wall: str):
    _, tris, on = _wall_segments(fe, wall)
    verts = fe.mesh.vertices
    ys, vals, weights = [], [], []
    for t, flags in zip(tris, on):
        a, b = np.flatnonzero(flags)
        ya, yb = verts[fe.cells_p1[t, a], 1], verts[fe.cells_p1[t, b], 1]
        s = 0.5 * (_GAUSS_X + 1.0)
        bary = np.zeros((len(s), 3))
        bary[:, a] = 1.0 - s
        bary[:, b] = s
        _, dphi = p2_basis(bary)
        grad = np.einsum("qak,kd->qad", dphi, fe.grad_lambda[t])
        dTdx = grad[..., 0] @ T[fe.cells_p2[t]]
        ys.append(ya + s * (yb - ya))
        vals.append(-dTdx)
        weights.append(0.5 * _GAUSS_W * abs(yb - ya))
    y = np.concatenate(ys)
    order = np.argsort(y)
    return y[order], np.concatenate(vals)[order], np.concatenate(weights)[order]


def nusselt_local(fe: FeSystem, T: np.ndarray, wall: str = "hot") -> tuple[np.ndarray, np.ndarray]:
    """-dT/dx along a vertical wall at 3 Gauss points per boundary edge.

    The same sign is used on both walls so that the conduction profile
    T = 1 - x gives +1 everywhere. Returns (y, Nu) sorted by y.
    """
    y, nu, _ = _wall_trace(fe, T, wall)
    return y, nu


def nusselt_avg(fe: FeSystem, T: np.ndarray, wall: str = "hot") -> float:
    """Integral of the local Nusselt number over the wall height."""
    _, nu, w = _wall_trace(fe, T, wall)
    return float(w @ nu)


# ---------------------------------------------------------- point sampling
def locate(fe: FeSystem, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Containing triangle and barycentric coordinates for each point."""
    pts = np.atleast_2d(points)
    p = fe.mesh.vertices[fe.cells_p1]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    rel = pts[None, :, :] - p[:, None, 0, :]
    l1 = (rel[..., 0] * d2[:, None, 1] - rel[..., 1] * d2[:, None, 0]) / det[:, None]
    l2 = (d1[:, None, 0] * rel[..., 1] - d1[:, None, 1] * rel[..., 0]) / det[:, None]
    l0 = 1.0 - l1 - l2
    worst = np.minimum(np.minimum(l0, l1), l2)
    tri = np.argmax(worst, axis=0)
    if np.any(worst[tri, np.arange(len(pts))] < -1e-12):
        raise ValueError("point outside the mesh")
    cols = np.arange(len(pts))
    return tri, np.column_stack([l0[tri, cols], l1[tri, cols], l2[tri, cols]])


def point_values(fe: FeSystem, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Values of a scalar P2 field at arbitrary points."""
    tri, bary = locate(fe, points)
    phi, _ = p2_basis(bary)
    return np.einsum("qa,qa->q", phi, coeffs[fe.cells_p2[tri]])


def slice_max(fe: FeSystem, u: np.ndarray, which: str, samples: int = 100) -> float:
    """max u1(0.5, y) or max u2(x, 0.5) over P2 nodes on the line plus
    ``samples`` uniform interior points."""
    if which not in MIDLINES:
        raise ValueError(f"unknown midline {which!r}")
    ux, uy = fe.split_velocity(u)
    s = np.linspace(0.0, 1.0, samples + 2)[1:-1]
    x, y = fe.nodes_p2.T
    if which == "horizontal_at_x_half":
        comp, on_line = ux, np.isclose(x, 0.5, rtol=0, atol=1e-14)
        pts = np.column_stack([np.full_like(s, 0.5), s])
    else:
        comp, on_line = uy, np.isclose(y, 0.5, rtol=0, atol=1e-14)
        pts = np.column_stack([s, np.full_like(s, 0.5)])
    vals = point_values(fe, comp, pts)
    if on_line.any():
        vals = np.concatenate([vals, comp[on_line]])
    return float(vals.max())


# ------------------------------------------------------- ensemble measures
def energy(ops, u: np.ndarray, T: np.ndarray) -> float:
    """||T|| + 1/2 ||u||^2."""
    return fem.l2_norm(ops.M_T, T) + 0.5 * fem.l2_norm(ops.M_u, u) ** 2


def variance(members: Sequence[np.ndarray], M) -> float:
    """<||chi||^2> - ||<chi>||^2, checked against <||chi'||^2>."""
    X = np.atleast_2d(np.asarray(members, dtype=float))
    mean = X.mean(axis=0)
    sq = np.mean([x @ (M @ x) for x in X])
    v1 = sq - mean @ (M @ mean)
    v2 = np.mean([(x - mean) @ (M @ (x - mean)) for x in X])
    if abs(v1 - v2) > 1e-12 * max(1.0, sq):
        raise ArithmeticError(f"variance formulas disagree: {v1!r} vs {v2!r}")
    return float(v2)


def relative_fluctuation(plus: np.ndarray, minus: np.ndarray, M) -> float:
    """||chi+ - chi-||^2 / (||chi+|| ||chi-||)."""
    a, b = fem.l2_norm(M, plus), fem.l2_norm(M, minus)
    if a == 0.0 or b == 0.0:
        raise ZeroDivisionError("relative fluctuation of a zero field")
    return fem.l2_norm(M, plus - minus) ** 2 / (a * b)


def effective_lyapunov(r: TimeSeries, tau: float) -> TimeSeries:
    """gamma_tau(t) = log(r(t + tau) / r(t)) / (2 tau) wherever t + tau is on
    the series. tau must be a multiple of the sampling interval."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    if np.any(r.values <= 0):
        raise ValueError("r must be positive")
    step = np.diff(r.times).mean() if len(r) > 1 else tau
    shift = int(round(tau / step))
    if shift < 1 or not math.isclose(shift * step, tau, rel_tol=1e-6):
        raise ValueError("tau is not a multiple of the output interval")
    if shift >= len(r):
        raise ValueError("tau exceeds the length of the series")
    g = np.log(r.values[shift:] / r.values[:-shift]) / (2.0 * tau)
    return TimeSeries(r.times[:-shift], g)


def predictability_horizon(gamma0: float, initial_sep: float, delta: float) -> float:
    """log(delta / initial_sep) / gamma0; infinite (unbounded) when gamma0 <= 0."""
    if not (delta > 0 and initial_sep > 0):
        raise ValueError("delta and the initial separation must be positive")
    if gamma0 <= 0:
        return math.inf
    return math.log(delta / initial_sep) / gamma0


# ------------------------------------------------------------------ errors
def convergence_rate(e1: float, e2: float, dt1: float, dt2: float) -> float:
    return math.log2(e1 / e2) / math.log2(dt1 / dt2)


def error_norms_and_rates(rows: Iterable[dict], fields=("u", "T", "p")) -> list[dict]:
    """Add ``rate_<field>`` to rows holding ``dt`` and ``err_<field>``
    (already maximized over time). Undefined rates are None."""
    out = []
    prev = None
    for row in rows:
        row = dict(row)
        for f in fields:
            e = row[f"err_{f}"]
            ok = prev is not None and e > 0 and prev[f"err_{f}"] > 0
            row[f"rate_{f}"] = convergence_rate(prev[f"err_{f}"], e, prev["dt"], row["dt"]) if ok else None
        out.append(row)
        prev = row
    return out


# --------------------------------------------------------------------- csv
def format_value(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float):
        if math.isinf(v):
            return "unbounded"
        return repr(v)
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], header: dict | None = None) -> None:
    """UTF-8 CSV; ``header`` entries are written first as ``# key = value`` lines."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k} = {v}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([format_value(v) for v in r])
