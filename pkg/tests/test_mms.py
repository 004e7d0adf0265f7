import numpy as np
import pytest
import sympy as sy

from aceflow import fem, mms
from aceflow.mesh import Labeling, build_structured_mesh
from aceflow.mms import ExactSolution

X, Y, TT = sy.symbols("x y t")
PR, RA = 0.71, 1234.0


def symbolic_fields(law):
    A = 10 * sy.cos(TT) if law == "cos" else 10 * (1 + sy.Rational(1, 10) * TT) * sy.cos(TT)
    psi = A / 2 * X**2 * (X - 1) ** 2 * Y**2 * (Y - 1) ** 2
    u1, u2 = sy.diff(psi, Y), -sy.diff(psi, X)
    T = u1 + u2
    p = A * (2 * X - 1) * (2 * Y - 1)
    return u1, u2, T, p


def symbolic_forcing(law):
    u1, u2, T, p = symbolic_fields(law)
    lap = lambda q: sy.diff(q, X, 2) + sy.diff(q, Y, 2)
    adv = lambda q: u1 * sy.diff(q, X) + u2 * sy.diff(q, Y)
    fx = sy.diff(u1, TT) + adv(u1) - PR * lap(u1) + sy.diff(p, X)
    fy = sy.diff(u2, TT) + adv(u2) - PR * lap(u2) + sy.diff(p, Y) - PR * RA * T
    g = sy.diff(T, TT) + adv(T) - lap(T)
    return [sy.lambdify((X, Y, TT), e, "numpy") for e in (fx, fy, g, sy.diff(u1, X) + sy.diff(u2, Y))]


@pytest.fixture(scope="module")
def points():
    rng = np.random.default_rng(0)
    return rng.uniform(0, 1, 1000), rng.uniform(0, 1, 1000), rng.uniform(0, 3, 1000)


def test_point_values():
    sol = ExactSolution()
    (u1, u2), T, p = mms.eval_exact(sol, 0.5, 0.5, 0.7)
    assert u1 == 0 and u2 == 0 and p == 0
    (u1, _), _, _ = mms.eval_exact(sol, 0.25, 0.25, 0.0)
    assert u1 == pytest.approx(10 * (0.0625 * 0.5625) * (0.25 * -0.75 * -0.5) / 2 * 2, abs=1e-15)
    assert u1 == pytest.approx(0.0329590, abs=1e-7)
    s = np.linspace(0, 1, 17)
    _, T, _ = mms.eval_exact(sol, s, s, 1.3)
    assert np.abs(T).max() < 1e-15


@pytest.mark.parametrize("law", mms.AMPLITUDE_LAWS)
def test_forcing_residual_and_divergence(law, points):
    x, y, t = points
    sol = ExactSolution(law)
    f, g = mms.forcings(sol, PR, RA)
    sfx, sfy, sg, sdiv = symbolic_forcing(law)
    fx, fy = f(x, y, t)
    scale = max(1.0, np.abs(sfy(x, y, t)).max())
    assert np.abs(fx - sfx(x, y, t)).max() <= 1e-12 * scale
    assert np.abs(fy - sfy(x, y, t)).max() <= 1e-12 * scale
    assert np.abs(g(x, y, t) - sg(x, y, t)).max() <= 1e-12 * max(1.0, np.abs(sg(x, y, t)).max())
    assert np.abs(sol.divergence(x, y, t)).max() <= 1e-14
    assert np.abs(sdiv(x, y, t)).max() <= 1e-14


@pytest.mark.parametrize("law", mms.AMPLITUDE_LAWS)
def test_forcing_against_finite_differences(law):
    rng = np.random.default_rng(1)
    x, y, t = rng.uniform(0.1, 0.9, 50), rng.uniform(0.1, 0.9, 50), rng.uniform(0, 2, 50)
    sol = ExactSolution(law)
    h = 1e-4
    vel = lambda a, b, c: np.array(sol.velocity(a, b, c))
    T = sol.temperature
    dx = lambda q, a, b, c: (q(a + h, b, c) - q(a - h, b, c)) / (2 * h)
    dy = lambda q, a, b, c: (q(a, b + h, c) - q(a, b - h, c)) / (2 * h)
    dt = lambda q, a, b, c: (q(a, b, c + h) - q(a, b, c - h)) / (2 * h)
    lap = lambda q, a, b, c: (q(a + h, b, c) + q(a - h, b, c) + q(a, b + h, c) + q(a, b - h, c) - 4 * q(a, b, c)) / h**2
    u = vel(x, y, t)
    fd_f = dt(vel, x, y, t) + u[0] * dx(vel, x, y, t) + u[1] * dy(vel, x, y, t) - PR * lap(vel, x, y, t)
    fd_f += np.array([dx(sol.pressure, x, y, t), dy(sol.pressure, x, y, t) - PR * RA * T(x, y, t)])
    fd_g = dt(T, x, y, t) + u[0] * dx(T, x, y, t) + u[1] * dy(T, x, y, t) - lap(T, x, y, t)
    f, g = mms.forcings(sol, PR, RA)
    assert np.abs(np.array(f(x, y, t)) - fd_f).max() < 1e-6 * max(1, np.abs(fd_f).max())
    assert np.abs(g(x, y, t) - fd_g).max() < 1e-6 * max(1, np.abs(fd_g).max())


def test_forcing_terms_at_center():
    sol = ExactSolution()
    f, _ = mms.forcings(sol, PR, RA)
    fx, fy = f(0.5, 0.5, 0.0)
    # u = 0 and T = 0 there, grad p = 2A(2y-1, 2x-1) = 0, so only -Pr lap u remains
    l1, l2 = sol.velocity_laplacian(0.5, 0.5, 0.0)
    assert fx == pytest.approx(-PR * l1, abs=1e-14) and fy == pytest.approx(-PR * l2, abs=1e-14)


def test_perturbed_family():
    sol = ExactSolution()
    a, b = mms.perturbed_family(sol, 0.0)
    assert a == sol and b == sol
    a, b = mms.perturbed_family(sol, 1e-3)
    x, y = np.random.default_rng(2).uniform(0, 1, (2, 100))
    ma, mb, m0 = (np.array(s.velocity(x, y, 0.4)) for s in (a, b, sol))
    assert np.abs((ma + mb) / 2 - m0).max() <= 1e-16 * 10
    assert np.allclose(ma - mb, 2e-3 * m0, rtol=1e-12, atol=1e-18)
    with pytest.raises(ValueError):
        mms.perturbed_family(sol, 1.0)
    with pytest.raises(ValueError):
        ExactSolution("sin")


def test_interpolant_divergence_decreases():
    norms = []
    for n in (4, 8, 16):
        fe = fem.build_fe_system(build_structured_mesh(n, Labeling.MMS), "mms")
        ops = fem.assemble_static_operators(fe)
        u, _, _ = mms.interpolate_state(fe, [ExactSolution()], 0.0)
        norms.append(np.linalg.norm(ops.B @ u[0]))
    assert norms[0] > norms[1] > norms[2]


def test_interpolation_error_and_boundary(mms8):
    fe, _ = mms8
    sols = list(mms.perturbed_family(ExactSolution(), 0.1))
    u, p, T = mms.interpolate_state(fe, sols, 0.5)
    eu, ep, eT = mms.l2_errors(fe, u[0], p[0], T[0], sols[0], 0.5)
    assert eu < 1e-3 and eT < 1e-3 and ep < 0.1  # the xy term in p is not in P1
    bd = mms.boundary_data(fe, sols)
    assert np.abs(bd.velocity(0.5, 0)).max() < 1e-14 and np.abs(bd.temperature(0.5, 1)).max() < 1e-14
