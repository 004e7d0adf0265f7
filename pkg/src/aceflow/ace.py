"""Ensemble timesteppers: the artificial compressibility ensemble (ACE) step,
the fluctuation timestep controller, and a coupled linearly implicit BDF1
reference stepper.

Every member is convected implicitly by the ensemble mean and explicitly by
its own fluctuation, so within one step all members share one velocity matrix
and one temperature matrix. Pressure is updated algebraically afterwards.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import fem
from .fem import DirichletSet, FeSystem, SparseOperatorSet
from .linsolve import (
    DEFAULT_MAX_ITER,
    DEFAULT_RESTART,
    DEFAULT_TOL,
    JacobiPreconditioner,
    PreconditionerCache,
    SolverError,
    cg_solve,
    solve_shared,
)

log = logging.getLogger(__name__)


@dataclass
class SimConfig:
    """Physical and numerical parameters.

    ``eps_ratio`` ties the artificial compressibility to the timestep,
    eps = eps_ratio * dt, so the grad-div weight dt/eps = 1/eps_ratio stays
    fixed when the controller halves dt.
    """

    Pr: float = 0.71
    Ra: float = 1.0e4
    dt0: float = 1.0e-3
    eps_ratio: float = 0.01
    C_dagger: float = 0.35
    t_star: float = 10.0
    J: int = 2
    n: int = 64
    tol: float = DEFAULT_TOL
    restart: int = DEFAULT_RESTART
    max_iter: int = DEFAULT_MAX_ITER
    pressure_tol: float = 1e-10
    precond: str = "lu"
    precond_reuse: int = 10
    steady_tol: float = 1e-5
    max_steps: int = 100000
    dt_floor: float = 1e-10
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        for name in ("Pr", "dt0", "eps_ratio", "t_star", "tol", "steady_tol", "dt_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.Ra < 0 or self.C_dagger < 0:
            raise ValueError("Ra and C_dagger must be non-negative")
        if self.J < 1 or self.n < 1:
            raise ValueError("J and n must be at least 1")

    def eps(self, dt: float) -> float:
        return self.eps_ratio * dt

    def replace(self, **kw) -> "SimConfig":
        return dataclasses.replace(self, **kw)


@dataclass
class EnsembleState:
    """Coefficient vectors for all members at one time level.

    ``u``, ``p``, ``T`` are arrays of shape (J, ndofs). Members are indexed
    from 0.
    """

    u: np.ndarray
    p: np.ndarray
    T: np.ndarray
    t: float = 0.0
    dt: float = 1.0e-3
    step: int = 0

    def __post_init__(self):
        self.u = np.atleast_2d(np.asarray(self.u, dtype=float))
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float))
        self.T = np.atleast_2d(np.asarray(self.T, dtype=float))
        if not (len(self.u) == len(self.p) == len(self.T)):
            raise ValueError("all fields need the same number of members")

    @property
    def J(self) -> int:
        return len(self.u)

    def copy(self) -> "EnsembleState":
        return EnsembleState(self.u.copy(), self.p.copy(), self.T.copy(), self.t, self.dt, self.step)

    def member(self, j: int) -> "EnsembleState":
        return EnsembleState(self.u[j : j + 1].copy(), self.p[j : j + 1].copy(), self.T[j : j + 1].copy(), self.t, self.dt, self.step)


def ensemble_mean(state: EnsembleState, field: str) -> np.ndarray:
    return getattr(state, field).mean(axis=0)


def fluctuation(state: EnsembleState, j: int, field: str = "u") -> np.ndarray:
    if not 0 <= j < state.J:
        raise IndexError(f"member {j} out of range for J={state.J}")
    values = getattr(state, field)
    return values[j] - values.mean(axis=0)


# --------------------------------------------------------------- problem data
Forcing = Callable | Sequence[Callable] | None


@dataclass
class BoundaryData:
    """Dirichlet values per member and time.

    The callables receive ``(t, j)`` and return values for the indices of the
    corresponding DirichletSet. ``None`` keeps the values stored in the set.
    """

    velocity: Callable | None = None
    temperature: Callable | None = None

    def velocity_set(self, fe: FeSystem, t: float, j: int) -> DirichletSet:
        bc = fe.velocity_dirichlet
        return bc if self.velocity is None else bc.with_values(self.velocity(t, j))

    def temperature_set(self, fe: FeSystem, t: float, j: int) -> DirichletSet:
        bc = fe.temperature_dirichlet
        return bc if self.temperature is None else bc.with_values(self.temperature(t, j))


def _member_forcing(f: Forcing, j: int):
    if f is None:
        return None
    if callable(f):
        return f
    return f[j]


def initial_state(fe: FeSystem, u, p, T, dt: float, ops: SparseOperatorSet | None = None, boundary: BoundaryData | None = None, t: float = 0.0) -> EnsembleState:
    """Impose boundary values and zero-mean pressure on raw member data."""
    boundary = boundary or BoundaryData()
    state = EnsembleState(u, p, T, t=t, dt=dt)
    for j in range(state.J):
        state.u[j] = boundary.velocity_set(fe, t, j).impose(state.u[j])
        state.T[j] = boundary.temperature_set(fe, t, j).impose(state.T[j])
        if ops is not None:
            state.p[j] = fem.zero_mean(ops.M_p, state.p[j])
    return state


# ----------------------------------------------------------- shared matrices
def velocity_matrix_data(fe: FeSystem, ops: SparseOperatorSet, mean_u: np.ndarray, dt: float, cfg: SimConfig) -> np.ndarray:
    """1/dt M + N(<u>) + Pr K + (dt/eps) GD, in the velocity pattern."""
    conv = fe.vector_data(fem.convection_data(fe, mean_u))
    return ops.M_u_data / dt + conv + cfg.Pr * ops.K_u_data + (dt / cfg.eps(dt)) * ops.GD_data


def temperature_matrix_data(fe: FeSystem, ops: SparseOperatorSet, mean_u: np.ndarray, dt: float) -> np.ndarray:
    """1/dt M + N*(<u>) + K, in the P2 pattern."""
    return ops.M_T_data / dt + fem.convection_data(fe, mean_u) + ops.K_T_data


@dataclass
class StepRecord:
    t: float
    dt: float
    cfl: float
    iterations_u: int
    iterations_T: int
    iterations_p: int
    halvings: int = 0
    wall_time: float = 0.0
    velocity_matrix: sp.csr_matrix | None = field(default=None, repr=False)
    temperature_matrix: sp.csr_matrix | None = field(default=None, repr=False)


class StepFailure(SolverError):
    pass


def _check(reports, what):
    for j, rep in enumerate(reports):
        if not rep.converged:
            raise StepFailure(f"{what} solve for member {j} did not converge ({rep.message}, residual {rep.residual:.3e})", rep)


def _apply_scalar_blockwise(fe: FeSystem, S: sp.csr_matrix, u: np.ndarray) -> np.ndarray:
    ux, uy = fe.split_velocity(u)
    return np.concatenate([S @ ux, S @ uy])


def cfl_value(state: EnsembleState, fe: FeSystem, ops: SparseOperatorSet, cfg: SimConfig, dt: float | None = None) -> tuple[float, float]:
    """Return (C dt / h * max_j ||grad u'_j||^2, max_j ||grad u'_j||^2)."""
    dt = state.dt if dt is None else dt
    mean = ensemble_mean(state, "u")
    worst = 0.0
    for j in range(state.J):
        d = state.u[j] - mean
        worst = max(worst, float(d @ (ops.K_u @ d)))
    return cfg.C_dagger * dt / fe.mesh.h_max * worst, worst


def cfl_check(state: EnsembleState, fe: FeSystem, ops: SparseOperatorSet, cfg: SimConfig) -> tuple[bool, float]:
    """Whether the fluctuation timestep condition holds, and max ||grad u'||^2."""
    value, worst = cfl_value(state, fe, ops, cfg)
    return value <= 1.0, worst


def ace_step(
    state: EnsembleState,
    fe: FeSystem,
    ops: SparseOperatorSet,
    cfg: SimConfig,
    f: Forcing = None,
    g: Forcing = None,
    boundary: BoundaryData | None = None,
    keep_matrices: bool = False,
    cache: PreconditionerCache | None = None,
) -> tuple[EnsembleState, StepRecord]:
    """Advance every member by one ACE step of size ``state.dt``.

    Returns the new state and a StepRecord. The temperature solve uses the
    level-n mean and fluctuations, so it does not depend on the new velocity.
    ``cache`` carries preconditioners between steps; without one they are
    rebuilt from the current matrices.
    """
    t0 = time.perf_counter()
    boundary = boundary or BoundaryData()
    cache = cache or PreconditionerCache(cfg.precond)
    solver_kw = dict(tol=cfg.tol, restart=cfg.restart, max_iter=cfg.max_iter, jobs=cfg.jobs)
    dt = state.dt
    t_new = state.t + dt
    J = state.J
    mean_u = ensemble_mean(state, "u")
    cfl, _ = cfl_value(state, fe, ops, cfg)

    # velocity
    A_u = fe.vector_matrix(velocity_matrix_data(fe, ops, mean_u, dt, cfg))
    A_u_bc = fem.constrain_matrix(A_u, fe.velocity_dirichlet)
    PrRa = cfg.Pr * cfg.Ra
    rhs_u, rhs_T, fluct_conv = [], [], []
    for j in range(J):
        uj = state.u[j]
        Nf = fe.pattern_p2.matrix(fem.convection_data(fe, uj - mean_u))
        fluct_conv.append(Nf)
        b = ops.M_u @ uj / dt - _apply_scalar_blockwise(fe, Nf, uj) + ops.B.T @ state.p[j]
        if PrRa:
            b += PrRa * fem.assemble_buoyancy(fe, state.T[j], ops.M_T)
        fj = _member_forcing(f, j)
        if fj is not None:
            b += fem.assemble_load(fe, fj, t_new, "velocity")
        rhs_u.append(fem.constrain_rhs(A_u, b, boundary.velocity_set(fe, t_new, j)))
    u_new, rep_u = solve_shared(A_u_bc, rhs_u, cache, "ace_u", key=dt, x0=list(state.u), **solver_kw)
    _check(rep_u, "velocity")

    # temperature
    A_T = fe.pattern_p2.matrix(temperature_matrix_data(fe, ops, mean_u, dt))
    A_T_bc = fem.constrain_matrix(A_T, fe.temperature_dirichlet)
    for j in range(J):
        b = ops.M_T @ state.T[j] / dt - fluct_conv[j] @ state.T[j]
        gj = _member_forcing(g, j)
        if gj is not None:
            b += fem.assemble_load(fe, gj, t_new, "temperature")
        rhs_T.append(fem.constrain_rhs(A_T, b, boundary.temperature_set(fe, t_new, j)))
    T_new, rep_T = solve_shared(A_T_bc, rhs_T, cache, "ace_T", key=dt, x0=list(state.T), **solver_kw)
    _check(rep_T, "temperature")

    # pressure: M_p (p^{n+1} - p^n) = -(dt/eps) B u^{n+1}
    Mp_pre = JacobiPreconditioner(ops.M_p)
    weights = ops.M_p @ np.ones(fe.n_p1)
    scale = dt / cfg.eps(dt)
    p_new, iters_p = [], 0
    for j in range(J):
        rhs = -scale * (ops.B @ u_new[j])
        dp, rep = cg_solve(ops.M_p, rhs, tol=cfg.pressure_tol, precond=Mp_pre)
        _check([rep], "pressure")
        iters_p += rep.iterations
        p_new.append(fem.zero_mean(ops.M_p, state.p[j] + dp, weights))

    new = EnsembleState(np.array(u_new), np.array(p_new), np.array(T_new), t=t_new, dt=dt, step=state.step + 1)
    record = StepRecord(
        t=t_new,
        dt=dt,
        cfl=cfl,
        iterations_u=sum(r.iterations for r in rep_u),
        iterations_T=sum(r.iterations for r in rep_T),
        iterations_p=iters_p,
        wall_time=time.perf_counter() - t0,
    )
    if keep_matrices:
        record.velocity_matrix = A_u
        record.temperature_matrix = A_T
    return new, record


def advance_adaptive(
    state: EnsembleState,
    fe: FeSystem,
    ops: SparseOperatorSet,
    cfg: SimConfig,
    f: Forcing = None,
    g: Forcing = None,
    boundary: BoundaryData | None = None,
    **kw,
) -> tuple[EnsembleState, StepRecord]:
    """Check the fluctuation condition on the level-n state, halving dt until
    it holds, then take one ACE step. dt is never increased."""
    state = state.copy()
    halvings = 0
    while True:
        value, _ = cfl_value(state, fe, ops, cfg)
        if value <= 1.0:
            break
        state.dt *= 0.5
        halvings += 1
        if state.dt < cfg.dt_floor:
            raise StepFailure(f"timestep fell below the floor {cfg.dt_floor:g} at t={state.t:g}")
    if halvings:
        log.info("t=%.6g: timestep halved %d time(s) to %.6g", state.t, halvings, state.dt)
    new, record = ace_step(state, fe, ops, cfg, f, g, boundary, **kw)
    record.halvings = halvings
    return new, record


# ------------------------------------------------------------- coupled BDF1
class _SaddleLayout:
    """Sparsity pattern of the coupled velocity-pressure matrix, built once."""

    def __init__(self, fe: FeSystem, ops: SparseOperatorSet):
        self.n_u = fe.n_u
        self.n = fe.n_u + fe.n_p1
        Mp = ops.M_p.tocsr()
        Z = sp.csr_matrix((np.zeros(Mp.nnz), Mp.indices, Mp.indptr), shape=Mp.shape)
        Av = fe.vector_matrix(np.zeros(fe.vector_nnz))
        K = sp.bmat([[Av, -ops.B.T], [-ops.B, Z]], format="csr")
        K.sort_indices()
        self.indptr, self.indices = K.indptr, K.indices
        # map velocity-pattern data into the saddle pattern
        Kv = sp.bmat([[fe.vector_matrix(np.arange(1, fe.vector_nnz + 1, dtype=float)), sp.csr_matrix((self.n_u, fe.n_p1))], [sp.csr_matrix((fe.n_p1, self.n_u)), sp.csr_matrix((fe.n_p1, fe.n_p1))]], format="csr")
        Kv.sort_indices()
        pos = self._positions(Kv)
        self.velocity_slots = pos[np.argsort(Kv.data.astype(np.int64))]
        base = sp.bmat([[sp.csr_matrix((self.n_u, self.n_u)), -ops.B.T], [-ops.B, Z]], format="csr")
        base.sort_indices()
        self.base = np.zeros(len(self.indices))
        self.base[self._positions(base)] = base.data
        bc_idx = np.concatenate([fe.velocity_dirichlet.indices, [self.n_u]])
        self.bc = DirichletSet(bc_idx, 0.0, self.n)

    def _positions(self, M: sp.csr_matrix) -> np.ndarray:
        rows = np.repeat(np.arange(self.n), np.diff(M.indptr))
        keys = rows.astype(np.int64) * self.n + M.indices
        krows = np.repeat(np.arange(self.n), np.diff(self.indptr)).astype(np.int64) * self.n + self.indices
        return np.searchsorted(krows, keys)

    def matrix(self, velocity_data: np.ndarray) -> sp.csr_matrix:
        data = self.base.copy()
        data[self.velocity_slots] += velocity_data
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


_layouts: dict = {}


def _saddle_layout(fe: FeSystem, ops: SparseOperatorSet) -> _SaddleLayout:
    key = (id(fe), id(ops))
    if key not in _layouts:
        _layouts.clear()
        _layouts[key] = _SaddleLayout(fe, ops)
    return _layouts[key]


def bdf1_coupled_step(
    state: EnsembleState,
    fe: FeSystem,
    ops: SparseOperatorSet,
    cfg: SimConfig,
    f: Forcing = None,
    g: Forcing = None,
    boundary: BoundaryData | None = None,
    cache: PreconditionerCache | None = None,
) -> tuple[EnsembleState, StepRecord]:
    """Linearly implicit BDF1, members stepped independently.

    Velocity and pressure are solved together with convection linearized at
    the member's own u^n; the pressure is pinned at dof 0 during the solve and
    re-centered after. Temperature follows, convected by u^{n+1}.
    """
    t0 = time.perf_counter()
    boundary = boundary or BoundaryData()
    cache = cache or PreconditionerCache(cfg.precond)
    solver_kw = dict(tol=cfg.tol, restart=cfg.restart, max_iter=cfg.max_iter)
    dt = state.dt
    t_new = state.t + dt
    lay = _saddle_layout(fe, ops)
    PrRa = cfg.Pr * cfg.Ra
    weights = ops.M_p @ np.ones(fe.n_p1)
    us, ps, Ts = [], [], []
    it_u = it_T = 0
    for j in range(state.J):
        uj = state.u[j]
        vdata = ops.M_u_data / dt + fe.vector_data(fem.convection_data(fe, uj)) + cfg.Pr * ops.K_u_data
        K = lay.matrix(vdata)
        vbc = boundary.velocity_set(fe, t_new, j)
        bc = DirichletSet(lay.bc.indices, np.concatenate([vbc.values, [0.0]]), lay.n)
        K_bc = fem.constrain_matrix(K, bc)
        b = np.zeros(lay.n)
        b[: fe.n_u] = ops.M_u @ uj / dt
        if PrRa:
            b[: fe.n_u] += PrRa * fem.assemble_buoyancy(fe, state.T[j], ops.M_T)
        fj = _member_forcing(f, j)
        if fj is not None:
            b[: fe.n_u] += fem.assemble_load(fe, fj, t_new, "velocity")
        b = fem.constrain_rhs(K, b, bc)
        x0 = np.concatenate([uj, state.p[j] - state.p[j][0]])
        (x,), (rep,) = solve_shared(K_bc, [b], cache, f"bdf1_up{j}", key=dt, x0=[x0], **solver_kw)
        _check([rep], "coupled velocity-pressure")
        it_u += rep.iterations
        u_new = x[: fe.n_u]
        us.append(u_new)
        ps.append(fem.zero_mean(ops.M_p, x[fe.n_u :], weights))

        A_T = fe.pattern_p2.matrix(ops.M_T_data / dt + fem.convection_data(fe, u_new) + ops.K_T_data)
        tbc = boundary.temperature_set(fe, t_new, j)
        A_T_bc = fem.constrain_matrix(A_T, tbc)
        bT = ops.M_T @ state.T[j] / dt
        gj = _member_forcing(g, j)
        if gj is not None:
            bT += fem.assemble_load(fe, gj, t_new, "temperature")
        bT = fem.constrain_rhs(A_T, bT, tbc)
        (T_new,), (rep,) = solve_shared(A_T_bc, [bT], cache, f"bdf1_T{j}", key=dt, x0=[state.T[j]], **solver_kw)
        _check([rep], "temperature")
        it_T += rep.iterations
        Ts.append(T_new)
    new = EnsembleState(np.array(us), np.array(ps), np.array(Ts), t=t_new, dt=dt, step=state.step + 1)
    return new, StepRecord(t_new, dt, 0.0, it_u, it_T, 0, wall_time=time.perf_counter() - t0)


# ------------------------------------------------------------ steady state
def relative_increments(prev: EnsembleState, new: EnsembleState, ops: SparseOperatorSet) -> tuple[float, float]:
    """Max over members of ||u^{n+1}-u^n|| / ||u^{n+1}|| and the same for T."""
    du = dT = 0.0
    for j in range(new.J):
        nu = fem.l2_norm(ops.M_u, new.u[j])
        nT = fem.l2_norm(ops.M_T, new.T[j])
        if nu == 0.0 or nT == 0.0:
            return float("inf"), float("inf")
        du = max(du, fem.l2_norm(ops.M_u, new.u[j] - prev.u[j]) / nu)
        dT = max(dT, fem.l2_norm(ops.M_T, new.T[j] - prev.T[j]) / nT)
    return du, dT


def steady_state_check(prev: EnsembleState, new: EnsembleState, ops: SparseOperatorSet, tol: float = 1e-5) -> bool:
    du, dT = relative_increments(prev, new, ops)
    if not np.isfinite(du):
        log.warning("steady-state check: zero velocity or temperature norm")
        return False
    return max(du, dT) <= tol


def write_step_log(path, records: Sequence[StepRecord]) -> None:
    """CSV with one row per step."""
    cols = ["time", "dt", "cfl", "iterations_u", "iterations_T", "iterations_p", "halvings"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in records:
            w.writerow([repr(r.t), repr(r.dt), repr(r.cfl), r.iterations_u, r.iterations_T, r.iterations_p, r.halvings])
