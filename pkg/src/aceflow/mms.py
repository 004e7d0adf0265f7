"""Manufactured Boussinesq solution on the unit square.

With P(s) = s^2 (s-1)^2 the velocity is the curl of the stream function
psi = a P(x) P(y) / 2, where a(t) = scale * A(t):

    u = a (P(x) P'(y), -P'(x) P(y)) / 2,   T = u1 + u2,   p = a (2x-1)(2y-1).

Every field and derivative is a polynomial times a or a', so the forcings
below are exact closed forms. u and T vanish on the whole boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


def _P(s):
    return s * s * (s - 1.0) ** 2


def _dP(s):
    return 2.0 * s * (s - 1.0) * (2.0 * s - 1.0)


def _d2P(s):
    return 12.0 * s * s - 12.0 * s + 2.0


def _d3P(s):
    return 24.0 * s - 12.0


AMPLITUDE_LAWS = ("cos", "growing_cos")


@dataclass(frozen=True)
class ExactSolution:
    """``law`` is "cos" for A = 10 cos t or "growing_cos" for
    A = 10 (1 + 0.1 t) cos t; ``scale`` multiplies every field."""

    law: str = "cos"
    scale: float = 1.0

    def __post_init__(self):
        if self.law not in AMPLITUDE_LAWS:
            raise ValueError(f"unknown amplitude law {self.law!r}")

    def amplitude(self, t):
        if self.law == "cos":
            return self.scale * 10.0 * np.cos(t)
        return self.scale * 10.0 * (1.0 + 0.1 * t) * np.cos(t)

    def amplitude_dt(self, t):
        if self.law == "cos":
            return -self.scale * 10.0 * np.sin(t)
        return self.scale * (np.cos(t) - 10.0 * (1.0 + 0.1 * t) * np.sin(t))

    # ---- fields
    def velocity(self, x, y, t):
        a = self.amplitude(t)
        return 0.5 * a * _P(x) * _dP(y), -0.5 * a * _dP(x) * _P(y)

    def temperature(self, x, y, t):
        u1, u2 = self.velocity(x, y, t)
        return u1 + u2

    def pressure(self, x, y, t):
        return self.amplitude(t) * (2.0 * x - 1.0) * (2.0 * y - 1.0)

    # ---- derivatives
    def velocity_gradient(self, x, y, t):
        """((du1/dx, du1/dy), (du2/dx, du2/dy))."""
        h = 0.5 * self.amplitude(t)
        return (
            (h * _dP(x) * _dP(y), h * _P(x) * _d2P(y)),
            (-h * _d2P(x) * _P(y), -h * _dP(x) * _dP(y)),
        )

    def velocity_laplacian(self, x, y, t):
        h = 0.5 * self.amplitude(t)
        return (
            h * (_d2P(x) * _dP(y) + _P(x) * _d3P(y)),
            -h * (_d3P(x) * _P(y) + _dP(x) * _d2P(y)),
        )

    def velocity_dt(self, x, y, t):
        h = 0.5 * self.amplitude_dt(t)
        return h * _P(x) * _dP(y), -h * _dP(x) * _P(y)

    def divergence(self, x, y, t):
        (a, _), (_, d) = self.velocity_gradient(x, y, t)
        return a + d


def eval_exact(sol: ExactSolution, x, y, t):
    """Return (u1, u2), T, p at the given points."""
    return sol.velocity(x, y, t), sol.temperature(x, y, t), sol.pressure(x, y, t)


def forcings(sol: ExactSolution, Pr: float, Ra: float):
    """Body force f(x, y, t) -> (fx, fy) and heat source g(x, y, t).

    f = u_t + u.grad u - Pr lap u + grad p - Pr Ra (0, T)
    g = T_t + u.grad T - lap T
    """

    def f(x, y, t):
        u1, u2 = sol.velocity(x, y, t)
        (u1x, u1y), (u2x, u2y) = sol.velocity_gradient(x, y, t)
        l1, l2 = sol.velocity_laplacian(x, y, t)
        d1, d2 = sol.velocity_dt(x, y, t)
        a = sol.amplitude(t)
        px = 2.0 * a * (2.0 * y - 1.0)
        py = 2.0 * a * (2.0 * x - 1.0)
        T = u1 + u2
        fx = d1 + u1 * u1x + u2 * u1y - Pr * l1 + px
        fy = d2 + u1 * u2x + u2 * u2y - Pr * l2 + py - Pr * Ra * T
        return fx, fy

    def g(x, y, t):
        u1, u2 = sol.velocity(x, y, t)
        (u1x, u1y), (u2x, u2y) = sol.velocity_gradient(x, y, t)
        l1, l2 = sol.velocity_laplacian(x, y, t)
        d1, d2 = sol.velocity_dt(x, y, t)
        return d1 + d2 + u1 * (u1x + u2x) + u2 * (u1y + u2y) - (l1 + l2)

    return f, g


def perturbed_family(sol: ExactSolution, delta1: float) -> tuple[ExactSolution, ExactSolution]:
    """Members scaled by 1 + delta1 and 1 - delta1; their mean is ``sol``."""
    if not abs(delta1) < 1.0:
        raise ValueError("|delta1| must be below 1")
    return replace(sol, scale=sol.scale * (1.0 + delta1)), replace(sol, scale=sol.scale * (1.0 - delta1))


def interpolate_state(fe, sols, t: float):
    """Nodal interpolants (u, p, T) of each member, as (J, ndofs) arrays."""
    x2, y2 = fe.nodes_p2.T
    x1, y1 = fe.mesh.vertices.T
    us, ps, Ts = [], [], []
    for s in sols:
        u1, u2 = s.velocity(x2, y2, t)
        us.append(np.concatenate([u1, u2]))
        Ts.append(s.temperature(x2, y2, t))
        ps.append(s.pressure(x1, y1, t))
    return np.array(us), np.array(ps), np.array(Ts)


def boundary_data(fe, sols):
    """BoundaryData imposing each member's exact traces.

    The exact velocity and temperature vanish on the boundary, but the traces
    are evaluated rather than assumed so other solutions can be swapped in.
    """
    from .ace import BoundaryData

    vbc = fe.velocity_dirichlet
    tbc = fe.temperature_dirichlet
    n2 = fe.n_p2
    vnode = vbc.indices % n2
    vcomp = vbc.indices // n2
    x2, y2 = fe.nodes_p2.T

    def velocity(t, j):
        u1, u2 = sols[j].velocity(x2[vnode], y2[vnode], t)
        return np.where(vcomp == 0, u1, u2)

    def temperature(t, j):
        return sols[j].temperature(x2[tbc.indices], y2[tbc.indices], t)

    return BoundaryData(velocity, temperature)


def l2_errors(fe, u, p, T, sol: ExactSolution, t: float) -> tuple[float, float, float]:
    """L2 errors of P2 velocity, P1 pressure and P2 temperature against ``sol``,
    by the high-order load quadrature."""
    rule = fe.load_rule
    tab = fe.tables(rule)
    x, y = tab["xq"][..., 0], tab["xq"][..., 1]
    w = tab["wdet"]
    ux, uy = fe.split_velocity(u)
    e1, e2 = sol.velocity(x, y, t)
    eu = np.sqrt(np.sum(w * ((fe.eval_p2(ux, rule) - e1) ** 2 + (fe.eval_p2(uy, rule) - e2) ** 2)))
    eT = np.sqrt(np.sum(w * (fe.eval_p2(T, rule) - sol.temperature(x, y, t)) ** 2))
    ep = np.sqrt(np.sum(w * (fe.eval_p1(p, rule) - sol.pressure(x, y, t)) ** 2))
    return float(eu), float(ep), float(eT)
