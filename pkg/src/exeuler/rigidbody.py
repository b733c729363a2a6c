"""Body momentum balance closed through the added-mass matrix.

The fluid pressure on the body splits into a part linear in the body
acceleration, folded into the 3x3 added-mass matrix M, and a remainder
computed by boundary quadrature of the Bernoulli pressure in the body frame:

    p = -d/dt phi_v + u . (ell + r y_perp) - |u|^2 / 2

where phi_v is the potential of the particle and circulation fields, and u
is the fluid velocity in body axes.  The generalised force on the body is

    F = -oint p (n, y_perp . n) ds + M (-r ell_2, r ell_1, 0),

the last term coming from the rotation of body axes.  Equations of motion:
(diag(m, m, J) + M) (a_body, r') = F.
"""
from __future__ import annotations

import numpy as np

from .conformal import BodyShape, ConformalMap
from .errors import QuadratureUnresolved, SingularSystem
from .fieldkernels import (
    TWO_PI,
    BlobParameter,
    harmonic_conj_velocity_c,
    kirchhoff_coefficients,
    kirchhoff_conj_velocity_c,
    kirchhoff_potential_c,
    self_conj_velocity_c,
)
from .state import BodyModel, BodyState, FlowState

__all__ = [
    "BodyModel",
    "BodyState",
    "added_mass",
    "particle_velocities",
    "vortical_force",
    "vortical_force_body",
    "body_acceleration",
    "rotation3",
]

QUAD_LEVELS = (256, 512, 1024, 2048, 4096)
QUAD_RTOL = 1e-4


def added_mass(cmap: ConformalMap, shape: BodyShape | None = None) -> np.ndarray:
    """M_ab = -oint Phi_a (n . v_b) ds over the body boundary, body frame.

    Phi_a = Re W_a are the Kirchhoff potentials of unit x-, y-translation and
    unit rotation about the centre of mass; n points into the fluid.
    """
    kirchhoff_coefficients(cmap)
    n = max(512, 8 * (cmap.order + 4))
    th = TWO_PI * np.arange(n) / n
    zeta = np.exp(1j * th)
    z = cmap.inverse_c(zeta)
    nds = zeta * cmap.dinverse_c(zeta) * (TWO_PI / n)
    phi = kirchhoff_potential_c(cmap, zeta).real
    vn = np.stack([nds.real, nds.imag, (np.conj(z) * nds).imag])
    m = -phi @ vn.T
    if np.max(np.abs(m - m.T)) > 1e-10 * max(1.0, np.max(np.abs(m))):
        raise QuadratureUnresolved("added-mass matrix is not symmetric to quadrature accuracy")
    return 0.5 * (m + m.T)


def rotation3(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _deltas(state: FlowState, blob: BlobParameter | None) -> np.ndarray:
    if blob is not None and blob.delta > 0 and not np.any(state.delta):
        return np.full(len(state.gamma), blob.delta)
    return np.asarray(state.delta)


def particle_velocities(state: FlowState, blob: BlobParameter | None = None, threads: int | None = None, eta=None):
    """Body-frame particle velocities dy/dt and their images d eta/dt.

    Returns ``(eta, ydot, etadot)`` as complex arrays.
    """
    cmap = state.cmap
    pos = state.pos_c
    if len(pos) == 0:
        e = np.zeros(0, dtype=complex)
        return e, e, e
    if eta is None:
        eta = cmap.forward_c(pos)
    ell = state.body.ell_body
    r = state.body.r
    w = self_conj_velocity_c(cmap, pos, state.gamma, _deltas(state, blob), threads, zeta=eta)
    w = w + kirchhoff_conj_velocity_c(cmap, ell, r, pos, eta)
    if state.gamma_bound != 0.0:
        w = w + state.gamma_bound * harmonic_conj_velocity_c(cmap, pos, eta)
    ydot = np.conj(w) - ell - r * 1j * pos
    etadot = ydot / cmap.dinverse_c(eta)
    return eta, ydot, etadot


def _force_at(state: FlowState, n: int, eta, etadot) -> tuple[np.ndarray, float]:
    cmap = state.cmap
    nodes = state.model.nodes(n)
    zeta, z, nds = nodes.zeta, nodes.z, nodes.normal_ds
    ell = state.body.ell_body
    r = state.body.r
    w = kirchhoff_conj_velocity_c(cmap, ell, r, z, zeta)
    if state.gamma_bound != 0.0:
        w = w + state.gamma_bound * harmonic_conj_velocity_c(cmap, z, zeta)
    dphi = np.zeros(n)
    if len(eta):
        gam = state.gamma
        eb = np.conj(eta)
        dz = zeta[:, None] - eta[None, :]
        dzs = zeta[:, None] * eb[None, :] - 1.0
        direct = 1.0 / dz
        image = 1.0 / (dzs / eb[None, :])
        w = w + (1.0 / cmap.dinverse_c(zeta)) * np.sum((direct - image) * gam, axis=1) / (TWO_PI * 1j)
        dphi = np.real(
            np.sum(
                gam / (TWO_PI * 1j) * (-etadot / dz - np.conj(etadot) / (eb * dzs)),
                axis=1,
            )
        )
    u = np.conj(w)
    vrig = ell + r * 1j * z
    p = -dphi + np.real(u * np.conj(vrig)) - 0.5 * np.abs(u) ** 2
    f = -np.sum(p * nds)
    tau = -np.sum(p * (np.conj(z) * nds).imag)
    m = state.model.added_mass
    gen = np.array([f.real, f.imag, tau]) + m @ np.array([-r * ell.imag, r * ell.real, 0.0])
    return gen, float(np.sum(np.abs(p) * nodes.ds))


def vortical_force_body(state: FlowState, blob: BlobParameter | None = None, threads: int | None = None, _pv=None) -> np.ndarray:
    """Generalised vortical force (F1, F2, tau) in body axes.

    The boundary quadrature is refined from 256 nodes upward until two
    successive levels agree to 1e-4 relative; QuadratureUnresolved if
    4096 nodes are not enough.
    """
    eta, _, etadot = _pv if _pv is not None else particle_velocities(state, blob, threads)
    prev, _ = _force_at(state, QUAD_LEVELS[0], eta, etadot)
    for n in QUAD_LEVELS[1:]:
        cur, pabs = _force_at(state, n, eta, etadot)
        scale = max(np.max(np.abs(cur)), 1e-3 * pabs, 1e-300)
        if np.max(np.abs(cur - prev)) <= QUAD_RTOL * scale:
            return cur
        prev = cur
    raise QuadratureUnresolved("boundary pressure quadrature did not converge at 4096 nodes")


def vortical_force(state: FlowState, blob: BlobParameter | None = None, threads: int | None = None) -> np.ndarray:
    """Vortical force and torque about h, lab axes."""
    return rotation3(state.body.theta) @ vortical_force_body(state, blob, threads)


def _solve(body: BodyState, a: np.ndarray, f: np.ndarray) -> np.ndarray:
    free = np.array([not body.fixed_translation] * 2 + [not body.fixed_rotation])
    out = np.zeros(3)
    if not free.any():
        return out
    sub = a[np.ix_(free, free)]
    rhs = f[free]
    try:
        x = np.linalg.solve(sub, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    res = np.max(np.abs(sub @ x - rhs))
    if not np.isfinite(x).all() or res > 1e-12 * max(1.0, np.max(np.abs(rhs)), np.max(np.abs(sub)) * np.max(np.abs(x))):
        raise SingularSystem(f"solve residual {res:.3e}")
    out[free] = x
    return out


def system_matrix(state: FlowState) -> np.ndarray:
    """diag(m, m, J) + R M R^T in lab axes (infinite entries for pinned motions)."""
    b = state.body
    q = rotation3(b.theta)
    return np.diag([b.m, b.m, b.J]) + q @ state.model.added_mass @ q.T


def body_acceleration(state: FlowState, blob: BlobParameter | None = None, threads: int | None = None, _pv=None):
    """(h'', r') in lab axes from (diag(m,m,J) + R M R^T) x = F_v."""
    b = state.body
    if b.fixed_translation and b.fixed_rotation:
        return np.zeros(2), 0.0
    f = rotation3(b.theta) @ vortical_force_body(state, blob, threads, _pv)
    x = _solve(b, system_matrix(state), f)
    return x[:2], float(x[2])
