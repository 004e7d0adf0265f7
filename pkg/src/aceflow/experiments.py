"""Experiment drivers: cavity benchmark, ACE vs BDF1 timing, MMS convergence
and predictability. Each driver takes a flat parameter dict (see DEFAULTS)
and returns plain rows; the command line layer handles files."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import diag, fem, mms
from .ace import (
    EnsembleState,
    SimConfig,
    ace_step,
    advance_adaptive,
    bdf1_coupled_step,
    initial_state,
    steady_state_check,
)
from .linsolve import PreconditionerCache
from .mesh import Labeling, build_structured_mesh
from .perturb import EnsembleFields, breed, build_cavity_initial_conditions, constant_state, ensemble_stepper, random_pair

log = logging.getLogger(__name__)

SOLVER_DEFAULTS = {
    "tol": 1e-10,
    "restart": 50,
    "max_iter": 2000,
    "precond": "lu",
    "precond_reuse": 10,
    "jobs": 1,
}

DEFAULTS = {
    "cavity": {
        "ra": [1e3, 1e4, 1e5, 1e6],
        "n": 64,
        "pr": 0.71,
        "dt0": 1e-3,
        "eps_ratio": 0.01,
        "c_dagger": 0.35,
        "j": 2,
        "k_star": 5,
        "steady_tol": 1e-5,
        "max_steps": 100000,
        "vtk": True,
        **SOLVER_DEFAULTS,
    },
    "timing": {
        "ra": [1e3, 1e4, 1e5, 5e5, 1e6],
        "n": 64,
        "pr": 0.71,
        "eps_ratio": 0.01,
        "c_dagger": 0.35,
        "k_star": 5,
        "steps": 500,
        **SOLVER_DEFAULTS,
    },
    "convergence": {
        "m": [8, 16, 24, 32, 40],
        "pr": 1.0,
        "ra": 100.0,
        "delta1": 1e-3,
        "eps_ratio": 1.0,
        "t_star": 1.0,
        "j": 2,
        **SOLVER_DEFAULTS,
    },
    "predictability": {
        "ra": [1e2, 1e3, 1e4],
        "n": 16,
        "pr": 1.0,
        "dt0": 1e-3,
        "eps_ratio": 1.0,
        "c_dagger": 0.35,
        "t_star": 0.1,
        "k_star": 5,
        **SOLVER_DEFAULTS,
    },
}

# desk presets: small enough for continuous integration
DESK = {
    "cavity": {"n": 32, "ra": [1e3, 1e4, 1e5]},
    "timing": {"n": 32, "ra": [1e3, 1e4, 1e5], "steps": 100},
    "convergence": {"m": [8, 16, 24]},
    "predictability": {},
}

# published values: (max u1, max u2, Nu) per Ra, (err_u, err_T, err_p) per m, horizons (u, T, p) per Ra
REFERENCE_CAVITY = {
    1e4: (16.16, 19.65, 2.24),
    1e5: (34.65, 68.88, 4.50),
    1e6: (65.48, 218.63, 8.77),
}
REFERENCE_CONVERGENCE = {
    8: (0.0083577, 1.20e-4, 0.15973),
    16: (0.0042676, 1.51e-5, 0.073252),
    24: (0.0028632, 4.67e-6, 0.047944),
    32: (0.0021495, 2.40e-6, 0.035660),
    40: (0.0017263, 1.68e-6, 0.028505),
}
REFERENCE_HORIZONS = {
    1e2: (0.0214, 0.0224, 0.0703),
    1e3: (0.0152, 0.0223, 0.0242),
    1e4: (0.0096, 0.0214, 0.0134),
}


def timing_dt(Ra: float) -> float:
    """Timestep of the timing test: 1e-3 up to Ra = 1e5, 1e-4 above."""
    return 1e-3 if Ra <= 1e5 else 1e-4


def sim_config(params: dict, **kw) -> SimConfig:
    keys = {
        "pr": "Pr",
        "dt0": "dt0",
        "eps_ratio": "eps_ratio",
        "c_dagger": "C_dagger",
        "t_star": "t_star",
        "j": "J",
        "n": "n",
        "tol": "tol",
        "restart": "restart",
        "max_iter": "max_iter",
        "precond": "precond",
        "precond_reuse": "precond_reuse",
        "steady_tol": "steady_tol",
        "max_steps": "max_steps",
        "jobs": "jobs",
    }
    args = {keys[k]: v for k, v in params.items() if k in keys}
    args.update(kw)
    return SimConfig(**args)


def _cache(cfg: SimConfig) -> PreconditionerCache:
    return PreconditionerCache(cfg.precond, cfg.precond_reuse)


def _single(state: EnsembleState) -> EnsembleState:
    return EnsembleState(state.u.mean(0, keepdims=True), state.p.mean(0, keepdims=True), state.T.mean(0, keepdims=True), state.t, state.dt)


def bred_cavity_state(fe, ops, cfg: SimConfig, prev: EnsembleState | None, seed: int, k_star: int = 5) -> tuple[EnsembleState, object]:
    """prev +- bred vector, bred under the dynamics at cfg.Ra. ``prev=None``
    starts from the constant-1 bootstrap."""
    base = constant_state(fe, 1.0, cfg.dt0) if prev is None else _single(prev)
    base.t, base.dt, base.step = 0.0, cfg.dt0, 0
    control = initial_state(fe, base.u, base.p, base.T, cfg.dt0, ops)
    one = cfg.replace(J=1)
    stepper = ensemble_stepper(fe, ops, one, cache=_cache(one))
    bv = breed(control, random_pair(seed), k_star, cfg.dt0, stepper, EnsembleFields(fe, ops), dt=cfg.dt0)
    return build_cavity_initial_conditions(fe, ops, control, bv, cfg.dt0), bv


# ------------------------------------------------------------------ cavity
@dataclass
class CavityResult:
    Ra: float
    state: EnsembleState
    converged: bool
    steps: int
    halvings: int
    max_u1: float
    max_u2: float
    nu_hot: float
    nu_cold: float
    records: list = field(default_factory=list, repr=False)
    profiles: dict = field(default_factory=dict, repr=False)
    bred: object = field(default=None, repr=False)
    dt_history: list = field(default_factory=list, repr=False)


def run_to_steady(state, fe, ops, cfg: SimConfig, progress_every: int = 500):
    """Adaptive ACE steps until the relative increments drop below
    cfg.steady_tol or cfg.max_steps is hit. Returns (state, converged, records)."""
    cache = _cache(cfg)
    records = []
    for k in range(cfg.max_steps):
        new, rec = advance_adaptive(state, fe, ops, cfg, cache=cache)
        records.append(rec)
        done = steady_state_check(state, new, ops, cfg.steady_tol)
        state = new
        if progress_every and (k + 1) % progress_every == 0:
            log.info("step %d t=%.4f dt=%.3g", k + 1, state.t, state.dt)
        if done:
            return state, True, records
    return state, False, records


def cavity_quantities(fe, state: EnsembleState) -> dict:
    u = state.u.mean(0)
    T = state.T.mean(0)
    return {
        "max_u1": diag.slice_max(fe, u, "horizontal_at_x_half"),
        "max_u2": diag.slice_max(fe, u, "vertical_at_y_half"),
        "nu_hot": diag.nusselt_avg(fe, T, "hot"),
        "nu_cold": diag.nusselt_avg(fe, T, "cold"),
    }


def run_cavity(params: dict, seed: int = 0, on_result=None) -> list[CavityResult]:
    """Rayleigh-number continuation: each Ra starts from the previous mean
    steady state plus and minus a bred vector."""
    n = int(params["n"])
    fe = fem.build_fe_system(build_structured_mesh(n), "cavity")
    ops = fem.assemble_static_operators(fe)
    prev = None
    out = []
    for i, Ra in enumerate(params["ra"]):
        cfg = sim_config(params, Ra=float(Ra), n=n)
        t0 = time.perf_counter()
        state, bv = bred_cavity_state(fe, ops, cfg, prev, seed + i, int(params["k_star"]))
        state, converged, records = run_to_steady(state, fe, ops, cfg)
        q = cavity_quantities(fe, state)
        T = state.T.mean(0)
        res = CavityResult(
            Ra=float(Ra),
            state=state,
            converged=converged,
            steps=len(records),
            halvings=sum(r.halvings for r in records),
            records=records,
            profiles={w: diag.nusselt_local(fe, T, w) for w in ("hot", "cold")},
            bred=bv,
            dt_history=[r.dt for r in records],
            **q,
        )
        log.info("Ra=%g: %d steps, converged=%s, %.1fs, %s", Ra, res.steps, converged, time.perf_counter() - t0, q)
        out.append(res)
        if on_result is not None:
            on_result(res, fe, ops)
        prev = state
    return out


# ------------------------------------------------------------------ timing
def run_timing(params: dict, seed: int = 0) -> list[dict]:
    """ACE and coupled BDF1 from the same bred initial condition with J = 1,
    the same preconditioner kind and reuse policy, and the same tolerances."""
    n = int(params["n"])
    fe = fem.build_fe_system(build_structured_mesh(n), "cavity")
    ops = fem.assemble_static_operators(fe)
    rows = []
    for i, Ra in enumerate(params["ra"]):
        dt = timing_dt(float(Ra))
        cfg = sim_config(params, Ra=float(Ra), n=n, J=1, dt0=dt)
        two, _ = bred_cavity_state(fe, ops, cfg.replace(J=2), None, seed + i, int(params["k_star"]))
        start = two.member(0)
        steps = int(params["steps"])
        row = {"Ra": float(Ra), "dt": dt, "steps": steps}
        for name in ("ace", "bdf1"):
            state = start.copy()
            cache = _cache(cfg)
            iters = 0
            t0 = time.perf_counter()
            for _ in range(steps):
                if name == "ace":
                    state, rec = ace_step(state, fe, ops, cfg, cache=cache)
                else:
                    state, rec = bdf1_coupled_step(state, fe, ops, cfg, cache=cache)
                iters += rec.iterations_u + rec.iterations_T
            row[f"{name}_seconds"] = time.perf_counter() - t0
            row[f"{name}_iterations"] = iters
            row[f"{name}_factorizations"] = cache.builds
            row[f"{name}_nu_hot"] = diag.nusselt_avg(fe, state.T[0], "hot")
        row["speedup"] = row["bdf1_seconds"] / row["ace_seconds"]
        log.info("timing Ra=%g: ACE %.2fs, BDF1 %.2fs, speedup %.2f", Ra, row["ace_seconds"], row["bdf1_seconds"], row["speedup"])
        rows.append(row)
    return rows


# ------------------------------------------------------------- convergence
def run_mms_case(m: int, params: dict) -> dict:
    """One MMS resolution: returns max-in-time L2 errors of the ensemble mean."""
    fe = fem.build_fe_system(build_structured_mesh(m, Labeling.MMS), "mms")
    ops = fem.assemble_static_operators(fe)
    dt = 1.0 / (10 * m)
    Pr, Ra = float(params["pr"]), float(params["ra"])
    cfg = sim_config(params, Ra=Ra, n=m, dt0=dt, J=2)
    sol = mms.ExactSolution("cos")
    family = mms.perturbed_family(sol, float(params["delta1"]))
    fg = [mms.forcings(s, Pr, Ra) for s in family]
    bd = mms.boundary_data(fe, family)
    u, p, T = mms.interpolate_state(fe, family, 0.0)
    state = initial_state(fe, u, p, T, dt, ops, bd)
    cache = _cache(cfg)
    steps = int(round(float(params["t_star"]) / dt))
    err = np.zeros(3)
    for _ in range(steps):
        state, _ = ace_step(state, fe, ops, cfg, [a for a, _ in fg], [b for _, b in fg], bd, cache=cache)
        err = np.maximum(err, mms.l2_errors(fe, state.u.mean(0), state.p.mean(0), state.T.mean(0), sol, state.t))
    return {"m": m, "dt": dt, "err_u": float(err[0]), "err_T": float(err[2]), "err_p": float(err[1])}


def run_convergence(params: dict, seed: int = 0) -> list[dict]:
    rows = []
    for m in params["m"]:
        t0 = time.perf_counter()
        rows.append(run_mms_case(int(m), params))
        log.info("m=%d: %s (%.1fs)", m, rows[-1], time.perf_counter() - t0)
    return diag.error_norms_and_rates(rows)


# ---------------------------------------------------------- predictability
FIELD_NAMES = ("u", "T", "p")


def _field(state: EnsembleState, name: str, j: int):
    return getattr(state, name)[j]


def _mass(ops, name):
    return {"u": ops.M_u, "T": ops.M_T, "p": ops.M_p}[name]


def run_predictability(params: dict, seed: int = 0) -> dict:
    """Bred-vector ensemble of the growing manufactured solution.

    Returns per-Ra time series (energy, variance, r) and the horizons.
    """
    n = int(params["n"])
    fe = fem.build_fe_system(build_structured_mesh(n, Labeling.MMS), "mms")
    ops = fem.assemble_static_operators(fe)
    Pr = float(params["pr"])
    dt0 = float(params["dt0"])
    t_star = float(params["t_star"])
    sol = mms.ExactSolution("growing_cos")
    series, horizons = [], []
    for i, Ra in enumerate(params["ra"]):
        Ra = float(Ra)
        cfg = sim_config(params, Ra=Ra, n=n, J=2)
        f, g = mms.forcings(sol, Pr, Ra)
        bd = mms.boundary_data(fe, [sol, sol])
        u, p, T = mms.interpolate_state(fe, [sol], 0.0)
        control = initial_state(fe, u, p, T, dt0, ops, bd)
        one = cfg.replace(J=1)
        stepper = ensemble_stepper(fe, ops, one, f, g, bd, _cache(one))
        bv = breed(control, random_pair(seed + i), int(params["k_star"]), dt0, stepper, EnsembleFields(fe, ops), dt=dt0)
        state = build_cavity_initial_conditions(fe, ops, control, bv, dt0, bd)

        def sample(st):
            row = {"Ra": Ra, "t": st.t}
            ue, pe, Te = mms.interpolate_state(fe, [sol], st.t)
            exact = {"u": ue[0], "T": Te[0], "p": pe[0]}
            for j, tag in ((0, "plus"), (1, "minus")):
                row[f"energy_{tag}"] = diag.energy(ops, st.u[j], st.T[j])
            row["energy_mean"] = diag.energy(ops, st.u.mean(0), st.T.mean(0))
            row["energy_exact"] = diag.energy(ops, exact["u"], exact["T"])
            for name in FIELD_NAMES:
                M = _mass(ops, name)
                row[f"variance_{name}"] = diag.variance(getattr(st, name), M)
                row[f"r_{name}"] = diag.relative_fluctuation(_field(st, name, 0), _field(st, name, 1), M)
                row[f"sep_{name}"] = fem.l2_norm(M, _field(st, name, 0) - _field(st, name, 1))
            return row

        rows = [sample(state)]
        cache = _cache(cfg)
        n_out = int(round(t_star / dt0))
        for k in range(1, n_out + 1):
            target = k * dt0
            while state.t < target - 1e-12 * dt0:
                state, _ = advance_adaptive(state, fe, ops, cfg, f, g, bd, cache=cache)
            rows.append(sample(state))
        series.extend(rows)
        times = np.array([r["t"] for r in rows])
        hz = {"Ra": Ra}
        for name in FIELD_NAMES:
            r = diag.TimeSeries(times, [row[f"r_{name}"] for row in rows])
            gamma = diag.effective_lyapunov(r, t_star)
            sep0 = rows[0][f"sep_{name}"]
            hz[f"gamma0_{name}"] = float(gamma.values[0])
            hz[f"horizon_{name}"] = diag.predictability_horizon(gamma.values[0], sep0, math.e * sep0)
        log.info("predictability Ra=%g: %s", Ra, hz)
        horizons.append(hz)
    return {"series": series, "horizons": horizons}
