"""Ensemble initial conditions: random perturbation pairs and bred vectors.

A bred vector is grown by running a control and a perturbed trajectory side
by side and, every reinitialization interval, rescaling their difference back
to a fixed size per field. What is left after the last cycle is the direction
in which nearby states separate fastest.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import fem
from .ace import BoundaryData, EnsembleState

FIELDS = ("u1", "u2", "T", "p")
DELTA_MAX = 0.01


@dataclass(frozen=True)
class PerturbationPair:
    """Magnitudes (delta_u1, delta_u2, delta_T, delta_p) and a sign."""

    deltas: tuple
    sign: int = 1

    def __post_init__(self):
        if len(self.deltas) != 4:
            raise ValueError("a perturbation pair has four magnitudes")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    def signed(self) -> np.ndarray:
        return self.sign * np.asarray(self.deltas, dtype=float)

    def negated(self) -> "PerturbationPair":
        return PerturbationPair(self.deltas, -self.sign)

    def as_dict(self) -> dict:
        return dict(zip(FIELDS, self.signed()))


def random_pair(seed: int) -> PerturbationPair:
    """Positive member of a pair with each magnitude uniform on (0, 0.01)."""
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.0, DELTA_MAX, 4)
    while np.any(d == 0.0):  # the open interval excludes 0
        d[d == 0.0] = rng.uniform(0.0, DELTA_MAX, int(np.sum(d == 0.0)))
    return PerturbationPair(tuple(float(v) for v in d), 1)


@dataclass
class BredVector:
    """Per-field perturbation vectors keyed by "u1", "u2", "T", "p"."""

    fields: dict
    deltas: dict

    def negated(self) -> "BredVector":
        return BredVector({k: -v for k, v in self.fields.items()}, {k: -v for k, v in self.deltas.items()})


class ArrayFields:
    """Field access for states that are plain dicts of arrays (unit-weight
    Euclidean norms, every entry free)."""

    names = FIELDS

    def __init__(self, names=FIELDS):
        self.names = tuple(names)

    def get(self, state, name):
        return np.asarray(state[name], dtype=float)

    def put(self, state, values: dict):
        new = dict(state)
        new.update(values)
        return new

    def norm(self, name, v):
        return float(np.linalg.norm(v))

    def free(self, name, state):
        return np.ones(np.shape(state[name]), dtype=bool)


class EnsembleFields:
    """Field access for single-member EnsembleStates on an FeSystem.

    Norms are L2 (mass-weighted): the scalar P2 mass for u1, u2 and T, the P1
    mass for p. Free dofs are those without a Dirichlet condition.
    """

    names = FIELDS

    def __init__(self, fe, ops):
        self.fe, self.ops = fe, ops
        n2 = fe.n_p2
        vmask = fe.velocity_dirichlet.mask
        self._free = {
            "u1": ~vmask[:n2],
            "u2": ~vmask[n2:],
            "T": ~fe.temperature_dirichlet.mask,
            "p": np.ones(fe.n_p1, dtype=bool),
        }

    def get(self, state: EnsembleState, name):
        n2 = self.fe.n_p2
        if name == "u1":
            return state.u[0, :n2]
        if name == "u2":
            return state.u[0, n2:]
        return getattr(state, name)[0]

    def put(self, state: EnsembleState, values: dict):
        new = state.copy()
        n2 = self.fe.n_p2
        for name, v in values.items():
            if name == "u1":
                new.u[0, :n2] = v
            elif name == "u2":
                new.u[0, n2:] = v
            else:
                getattr(new, name)[0] = v
        return new

    def norm(self, name, v):
        M = self.ops.M_p if name == "p" else self.ops.M_T
        return fem.l2_norm(M, v)

    def free(self, name, state):
        return self._free[name]


class BreedingError(RuntimeError):
    pass


def breed(
    control_ic,
    pair: PerturbationPair,
    k_star: int,
    delta_t_reinit: float,
    stepper: Callable,
    fields=None,
    dt: float | None = None,
) -> BredVector:
    """Bred vector after ``k_star`` reinitialization cycles.

    ``stepper(state, duration)`` advances a state by ``duration`` and returns
    the new state. The perturbed start adds the constant delta_i to every
    free dof of field i. At each t^k = k * delta_t_reinit the difference is
    rescaled to norm |delta_i| (sign kept from the pair) and the perturbed
    state is reset to control + bv.
    """
    if k_star < 1:
        raise ValueError("k_star must be at least 1")
    if dt is not None and delta_t_reinit < dt:
        raise ValueError("the reinitialization interval must be at least the timestep")
    if not delta_t_reinit > 0:
        raise ValueError("the reinitialization interval must be positive")
    fields = fields or ArrayFields()
    deltas = pair.as_dict()
    names = [n for n in fields.names if n in deltas]

    control = control_ic
    start = {}
    for name in names:
        v = np.array(fields.get(control, name), dtype=float)
        v[fields.free(name, control)] += deltas[name]
        start[name] = v
    perturbed = fields.put(control, start)

    bv = {}
    for k in range(1, k_star + 1):
        control = stepper(control, delta_t_reinit)
        perturbed = stepper(perturbed, delta_t_reinit)
        reset = {}
        for name in names:
            c = np.asarray(fields.get(control, name), dtype=float)
            diff = np.asarray(fields.get(perturbed, name), dtype=float) - c
            size = fields.norm(name, diff)
            if size == 0.0 or not np.isfinite(size):
                raise BreedingError(f"cycle {k}: perturbed and control {name} coincide (difference norm {size}); cannot rescale")
            bv[name] = (abs(deltas[name]) / size) * diff
            reset[name] = c + bv[name]
        perturbed = fields.put(perturbed, reset)
    return BredVector(bv, deltas)


def ensemble_stepper(fe, ops, cfg, f=None, g=None, boundary=None, cache=None):
    """A ``stepper`` running single-member ACE steps of size cfg.dt0."""
    from .ace import ace_step
    from .linsolve import PreconditionerCache

    cache = cache or PreconditionerCache(cfg.precond, cfg.precond_reuse)

    def step(state: EnsembleState, duration: float) -> EnsembleState:
        n = max(1, int(round(duration / state.dt)))
        for _ in range(n):
            state, _ = ace_step(state, fe, ops, cfg, f, g, boundary, cache=cache)
        return state

    return step


def constant_state(fe, value: float = 1.0, dt: float = 1e-3) -> EnsembleState:
    """Single-member state with every dof set to ``value`` (before any
    boundary conditions are imposed)."""
    return EnsembleState(np.full((1, fe.n_u), value), np.full((1, fe.n_p1), value), np.full((1, fe.n_p2), value), dt=dt)


def build_cavity_initial_conditions(fe, ops, prev: EnsembleState | None, bv: BredVector | None, dt: float = 1e-3, boundary: BoundaryData | None = None) -> EnsembleState:
    """Two members prev + bv and prev - bv with boundary values imposed and
    zero-mean pressures. ``prev=None`` is the constant-1 bootstrap."""
    from .ace import initial_state

    prev = constant_state(fe, 1.0, dt) if prev is None else prev
    if prev.J != 1:
        prev = EnsembleState(prev.u.mean(0, keepdims=True), prev.p.mean(0, keepdims=True), prev.T.mean(0, keepdims=True), prev.t, prev.dt)
    u0, p0, T0 = prev.u[0], prev.p[0], prev.T[0]
    if bv is None:
        du, dp, dT = np.zeros_like(u0), np.zeros_like(p0), np.zeros_like(T0)
    else:
        du = np.concatenate([bv.fields["u1"], bv.fields["u2"]])
        dp, dT = bv.fields["p"], bv.fields["T"]
    u = np.array([u0 + du, u0 - du])
    p = np.array([p0 + dp, p0 - dp])
    T = np.array([T0 + dT, T0 - dT])
    return initial_state(fe, u, p, T, dt, ops, boundary, t=prev.t)
