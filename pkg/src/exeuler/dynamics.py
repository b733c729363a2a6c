"""Time integration of the coupled body + vortex-particle system.

Particles are tracked in body coordinates y, with x = Q(theta) y + h, so
the conformal map never changes.  A particle moves with

    dy/dt = u(y) - ell - r y_perp,

u being the fluid velocity in body axes and ell = Q^T h'.  The body obeys
the added-mass equations of :mod:`exeuler.rigidbody`.  Classical RK4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import InsideBody, NewtonDiverged, ParticleTooClose, StepRejected
from .fieldkernels import BlobParameter
from .rigidbody import body_acceleration, particle_velocities
from .state import BodyState, FlowState

BREAKDOWN_FRACTION = 1e-6


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    scheme: str = "rk4"
    blob: BlobParameter = field(default_factory=BlobParameter)
    max_steps: int = 10_000_000
    threads: int | None = None

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if self.scheme != "rk4":
            raise ValueError(f"unsupported scheme {self.scheme!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass(frozen=True)
class Derivative:
    ydot: np.ndarray
    hdot: np.ndarray
    hddot: np.ndarray
    thetadot: float
    rdot: float

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.hdot, self.hddot, [self.thetadot, self.rdot], self.ydot.ravel()])


def boundary_distance(state: FlowState, eta: np.ndarray | None = None) -> np.ndarray:
    """First-order distance of each particle to the body boundary."""
    if len(state.gamma) == 0:
        return np.zeros(0)
    if eta is None:
        eta = state.cmap.forward_c(state.pos_c)
    return (np.abs(eta) - 1.0) * np.abs(state.cmap.dinverse_c(eta))


def check_clearance(state: FlowState) -> np.ndarray:
    """Images T(y_j) of the particles; ParticleTooClose if any is at the body."""
    try:
        eta = state.cmap.forward_c(state.pos_c)
    except (InsideBody, NewtonDiverged) as exc:
        raise ParticleTooClose(f"particle left the fluid at t={state.time:.6g}") from exc
    d = boundary_distance(state, eta)
    lim = BREAKDOWN_FRACTION * state.model.shape.diameter
    if d.size and d.min() < lim:
        j = int(np.argmin(d))
        raise ParticleTooClose(f"particle {j} within {d[j]:.3e} of the body at t={state.time:.6g}")
    return eta


def state_derivative(state: FlowState, blob: BlobParameter | None = None, threads: int | None = None) -> Derivative:
    eta = check_clearance(state)
    pv = particle_velocities(state, blob, threads, eta=eta)
    hddot, rdot = body_acceleration(state, blob, threads, _pv=pv)
    ydot = np.stack([pv[1].real, pv[1].imag], axis=-1) if len(state.gamma) else np.zeros((0, 2))
    return Derivative(ydot, np.array(state.body.hdot), np.asarray(hddot, float), state.body.r, rdot)


def pack(state: FlowState) -> np.ndarray:
    b = state.body
    return np.concatenate([b.h, b.hdot, [b.theta, b.r], state.pos.ravel()])


def unpack(template: FlowState, v: np.ndarray, time: float) -> FlowState:
    b = template.body
    body = BodyState((v[0], v[1]), (v[2], v[3]), float(v[4]), float(v[5]), b.m, b.J)
    return FlowState(template.model, body, v[6:].reshape(-1, 2), template.gamma, template.gamma_bound, time, template.delta)


def step(state: FlowState, config: IntegratorConfig, dt: float | None = None) -> FlowState:
    """One classical RK4 step; circulations are carried over untouched."""
    h = config.dt if dt is None else dt
    blob, th = config.blob, config.threads

    def f(s: FlowState) -> np.ndarray:
        return state_derivative(s, blob, th).as_vector()

    y0 = pack(state)
    k1 = f(state)
    try:
        k2 = f(unpack(state, y0 + 0.5 * h * k1, state.time + 0.5 * h))
        k3 = f(unpack(state, y0 + 0.5 * h * k2, state.time + 0.5 * h))
        k4 = f(unpack(state, y0 + h * k3, state.time + h))
    except ParticleTooClose as exc:
        raise StepRejected(f"RK stage rejected: {exc}") from exc
    # pinned motions have zero acceleration, so h' and r stay exactly constant
    y1 = y0 + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return unpack(state, y1, state.time + h)


Sink = Callable[[int, FlowState], None]


def step_schedule(T: float, dt: float) -> list[float]:
    """Step sizes covering [0, T]: full steps plus one shorter final step if needed."""
    if T < 0:
        raise ValueError("T must be >= 0")
    if T == 0:
        return []
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    last = T - (n - 1) * dt
    return [dt] * (n - 1) + [last]


def run(
    state: FlowState,
    config: IntegratorConfig,
    T: float,
    sinks: Iterable[Sink] = (),
    dump_every: int = 1,
) -> FlowState:
    """Integrate to time ``state.time + T`` calling each sink every ``dump_every`` steps.

    Sinks get ``(step_index, state)``, always at step 0 and at the final step.
    A ParticleTooClose/StepRejected propagates after the sinks have seen
    every completed dump.
    """
    sinks = list(sinks)
    if dump_every < 1:
        raise ValueError("dump_every must be >= 1")
    steps = step_schedule(T, config.dt)
    if len(steps) > config.max_steps:
        raise ValueError(f"{len(steps)} steps exceed max_steps={config.max_steps}")
    check_clearance(state)
    for s in sinks:
        s(0, state)
    t0 = state.time
    for k, h in enumerate(steps, start=1):
        nxt = step(state, config, h)
        # time from the step count, so no round-off accumulates
        t = t0 + T if k == len(steps) else t0 + k * config.dt
        state = nxt.with_(time=t)
        if k % dump_every == 0 or k == len(steps):
            for s in sinks:
                s(k, state)
    return state
