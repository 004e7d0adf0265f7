"""Quadrature rules on the reference triangle (0,0), (1,0), (0,1).

Points are returned in barycentric coordinates (l1, l2, l3) where the
Cartesian reference point is (l2, l3). Weights sum to 1, so the integral over
a physical triangle is ``area * sum(w * f)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class TriangleRule:
    barycentric: np.ndarray  # (nq, 3)
    weights: np.ndarray  # (nq,)
    degree: int

    @property
    def n_points(self) -> int:
        return len(self.weights)

    @property
    def points(self) -> np.ndarray:
        """Cartesian reference coordinates, (nq, 2)."""
        return self.barycentric[:, 1:]


def _orbit(*args):
    """Expand barycentric orbit generators into points."""
    if len(args) == 0:
        return [(1 / 3, 1 / 3, 1 / 3)]
    if len(args) == 1:
        a = args[0]
        b = 1.0 - 2.0 * a
        return [(b, a, a), (a, b, a), (a, a, b)]
    a, b = args
    c = 1.0 - a - b
    return [(a, b, c), (c, a, b), (b, c, a), (b, a, c), (c, b, a), (a, c, b)]


def _assemble(groups, degree):
    pts, wts = [], []
    for weight, gen in groups:
        orbit = _orbit(*gen)
        pts.extend(orbit)
        wts.extend([weight] * len(orbit))
    return TriangleRule(np.array(pts), np.array(wts), degree)


@lru_cache(maxsize=None)
def strang_fix_7() -> TriangleRule:
    """7-point rule exact through degree 5."""
    r15 = np.sqrt(15.0)
    return _assemble(
        [
            (9.0 / 40.0, ()),
            ((155.0 - r15) / 1200.0, ((6.0 - r15) / 21.0,)),
            ((155.0 + r15) / 1200.0, ((6.0 + r15) / 21.0,)),
        ],
        degree=5,
    )


@lru_cache(maxsize=None)
def dunavant_16() -> TriangleRule:
    """16-point rule exact through degree 8."""
    return _assemble(
        [
            (0.144315607677787, ()),
            (0.095091634267285, (0.459292588292723,)),
            (0.103217370534718, (0.170569307751760,)),
            (0.032458497623198, (0.050547228317031,)),
            (0.027230314174435, (0.008394777409958, 0.263112829634638)),
        ],
        degree=8,
    )


@lru_cache(maxsize=None)
def collapsed_gauss(degree: int) -> TriangleRule:
    """Conical product (Duffy) rule exact through ``degree``.

    Gauss-Jacobi in the collapsed direction absorbs the Jacobian, so
    ceil((degree+1)/2) points per direction suffice.
    """
    m = (degree + 2) // 2
    s, ws = roots_jacobi(m, 0.0, 0.0)
    r, wr = roots_jacobi(m, 1.0, 0.0)
    s = 0.5 * (s + 1.0)
    ws = 0.5 * ws
    r = 0.5 * (r + 1.0)
    wr = 0.25 * wr
    R, S = np.meshgrid(r, s, indexing="ij")
    WR, WS = np.meshgrid(wr, ws, indexing="ij")
    # (r, s) in [0,1]^2 -> (r, s(1-r)); the Jacobi weight carries the (1-r)
    x = R.ravel()
    y = (S * (1.0 - R)).ravel()
    w = (WR * WS).ravel()
    w = w / w.sum()
    bary = np.column_stack([1.0 - x - y, x, y])
    return TriangleRule(bary, w, degree)


def rule_for_degree(degree: int) -> TriangleRule:
    if degree <= 5:
        return strang_fix_7()
    if degree <= 8:
        return dunavant_16()
    return collapsed_gauss(degree)
