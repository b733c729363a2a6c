"""Conserved and bounded quantities of a flow state, and the growth envelope.

Energy.  E0 = ||u||^2 + m|h'|^2 + J r^2 (no factor 1/2, unit fluid density).
Two evaluations are provided:

* ``energy_E0_exact``: xi^T M xi - sum_i Gamma_i psi_ren(y_i) + rigid terms,
  with xi = (ell, r) and psi_ren the stream function at y_i with the
  logarithmic self-singularity removed in physical coordinates.
* ``energy_E0``: quadrature of |u|^2 over an annulus 1 < |zeta| < R of the
  mapped plane, the direct particle terms smoothed with a Gaussian core of
  physical radius delta_E, plus the dipole tail beyond R, minus the core
  self-energy (Gamma^2 / 2 pi)(ln(1/delta_E) + (gamma_Euler - ln 2)/2) per
  particle.  A Gaussian core leaves the far field exact up to exponentially
  small terms, and by the mean-value property its coupling to the harmonic
  background is exact, so the result converges to the point-vortex E0.

Impulse.  Lab-frame linear impulse P and angular impulse L of body + fluid:

    I  = -i * integral x omega,       A = -1/2 integral |x|^2 omega,
    P  = m h' + I - |S| h',           L = J r + m h x h' + A - |S| h x h' - I_S r,

where omega is the full vorticity of the fluid continued into the body by
the rigid motion: the particles, a vortex sheet (u - v_rigid) . t ds on the
boundary, and the uniform value 2r inside S.  The subtracted terms remove
the momentum of that fictitious interior fluid.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EnvelopeViolated, UnboundedEnergy
from .fieldkernels import TWO_PI, harmonic_conj_velocity_c, kirchhoff_conj_velocity_c, kirchhoff_coefficients
from .state import FlowState

# --------------------------------------------------------------------------
# Energy
# --------------------------------------------------------------------------

GAUSS_SELF = 0.5 * (np.euler_gamma - math.log(2.0))


def _require_finite_energy(state: FlowState) -> None:
    if state.gamma_bound != 0.0:
        raise UnboundedEnergy("kinetic energy is infinite with nonzero bound circulation")


def rigid_energy(state: FlowState) -> float:
    b = state.body
    e = 0.0
    if not b.fixed_translation:
        e += b.m * abs(b.hdot_c) ** 2
    if not b.fixed_rotation:
        e += b.J * b.r**2
    return float(e)


def _xi(state: FlowState) -> np.ndarray:
    ell = state.body.ell_body
    return np.array([ell.real, ell.imag, state.body.r])


def energy_E0_exact(state: FlowState) -> float:
    """Point-vortex form of E0 (self-energies renormalised)."""
    _require_finite_energy(state)
    xi = _xi(state)
    e = float(xi @ state.model.added_mass @ xi)
    n = len(state.gamma)
    if n:
        cmap = state.cmap
        eta = cmap.forward_c(state.pos_c)
        gam = state.gamma
        d = np.abs(eta[:, None] - eta[None, :])
        np.fill_diagonal(d, 1.0)
        g = np.log(d / np.abs(eta[:, None] * np.conj(eta)[None, :] - 1.0)) / TWO_PI
        np.fill_diagonal(g, 0.0)
        self_part = (np.log(1.0 / np.abs(cmap.dinverse_c(eta))) - np.log(np.abs(eta) ** 2 - 1.0)) / TWO_PI
        psi = g @ gam + gam * self_part
        e -= float(gam @ psi)
    return e + rigid_energy(state)


@dataclass(frozen=True)
class EnergyQuadrature:
    """Tensor quadrature on 1 < |zeta| < R: trapezoid in angle, Gauss-Legendre panels in ln|zeta|."""

    R: float = 40.0
    n_r: int = 512
    n_t: int = 1024
    panel: int = 16
    core: float = 0.1

    def nodes(self):
        npan = max(1, self.n_r // self.panel)
        x, w = np.polynomial.legendre.leggauss(self.panel)
        edges = np.linspace(0.0, math.log(self.R), npan + 1)
        s = ((edges[:-1, None] + edges[1:, None]) / 2 + (edges[1:, None] - edges[:-1, None]) / 2 * x).ravel()
        ws = ((edges[1:, None] - edges[:-1, None]) / 2 * w).ravel()
        rho = np.exp(s)
        th = TWO_PI * np.arange(self.n_t) / self.n_t
        # dA = rho^2 ds dtheta
        return rho, ws * rho**2 * (TWO_PI / self.n_t), th


def _zeta_plane_conj_velocity(state: FlowState, zeta: np.ndarray, core: float) -> tuple[np.ndarray, complex]:
    """dw/dzeta of the full flow (gamma_bound = 0) and its 1/zeta^2 far-field coefficient."""
    cmap = state.cmap
    ell, r = state.body.ell_body, state.body.r
    a = kirchhoff_coefficients(cmap)
    coef = ell.real * a[0] + ell.imag * a[1] + r * a[2]
    k = np.arange(1, len(coef) + 1)
    w = 1.0 / zeta
    out = np.zeros(zeta.shape, dtype=complex)
    for kk, c in zip(k[::-1], coef[::-1]):
        out = out * w + kk * c
    out = -(w * w) * out
    # w ~ c1 / zeta at infinity, dw/dzeta ~ -c1 / zeta^2
    c1 = complex(coef[0]) if len(coef) else 0j
    if len(state.gamma):
        eta = cmap.forward_c(state.pos_c)
        d2 = (core / np.abs(cmap.dinverse_c(eta))) ** 2
        es = 1.0 / np.conj(eta)
        for e, ei, g, dd in zip(eta, es, state.gamma, d2):
            dz = zeta - e
            q = np.abs(dz) ** 2
            # Gaussian core: (1 - exp(-q/dd)) / q, finite at q = 0
            f = np.where(q > 0, -np.expm1(-q / dd) / np.where(q > 0, q, 1.0), 1.0 / dd)
            out = out + g / (TWO_PI * 1j) * (np.conj(dz) * f - 1.0 / (zeta - ei))
            c1 += g / (TWO_PI * 1j) * (ei - e)
    return out, c1


def energy_E0(state: FlowState, quad: EnergyQuadrature = EnergyQuadrature()) -> float:
    """Grid-quadrature E0 (see module docstring)."""
    _require_finite_energy(state)
    rho, wr, th = quad.nodes()
    e = 0.0
    eit = np.exp(1j * th)
    # row blocks keep the temporaries small
    for i in range(0, len(rho), 64):
        zeta = rho[i : i + 64, None] * eit[None, :]
        dw, c1 = _zeta_plane_conj_velocity(state, zeta, quad.core)
        e += float(np.sum(wr[i : i + 64, None] * np.abs(dw) ** 2))
    e += math.pi * abs(c1) ** 2 / quad.R**2
    gam = state.gamma
    e -= float(np.sum(gam**2)) / TWO_PI * (math.log(1.0 / quad.core) + GAUSS_SELF)
    return e + rigid_energy(state)


# --------------------------------------------------------------------------
# Impulse
# --------------------------------------------------------------------------


def impulse(state: FlowState, n_nodes: int = 1024) -> np.ndarray:
    """(P_x, P_y, L) of body plus fluid in lab axes."""
    cmap = state.cmap
    b = state.body
    q = np.exp(1j * b.theta)
    h, hd = b.h_c, b.hdot_c
    shape = state.model.shape
    area, i_s = shape.area, shape.polar_moment
    nodes = state.model.nodes(n_nodes)
    ell, r = b.ell_body, b.r
    w = kirchhoff_conj_velocity_c(cmap, ell, r, nodes.z, nodes.zeta)
    if state.gamma_bound != 0.0:
        w = w + state.gamma_bound * harmonic_conj_velocity_c(cmap, nodes.z, nodes.zeta)
    xl_p = state.lab_positions
    gam = state.gamma
    if len(gam):
        eta = cmap.forward_c(state.pos_c)
        es = 1.0 / np.conj(eta)
        s = np.sum(gam * (1.0 / (nodes.zeta[:, None] - eta) - 1.0 / (nodes.zeta[:, None] - es)), axis=1)
        w = w + s / (TWO_PI * 1j * nodes.dz)
    dz = 1j * nodes.zeta * nodes.dz * (TWO_PI / len(nodes.zeta))
    kappa = np.real((np.conj(w) - ell - r * 1j * nodes.z) * np.conj(dz))
    xl_s = q * nodes.z + h
    imp = -1j * (np.sum(gam * xl_p) + np.sum(kappa * xl_s)) - 2j * r * area * h
    ang = -0.5 * (np.sum(gam * np.abs(xl_p) ** 2) + np.sum(kappa * np.abs(xl_s) ** 2)) - r * (i_s + area * abs(h) ** 2)
    cross = (np.conj(h) * hd).imag
    m = 0.0 if b.fixed_translation else b.m
    jj = 0.0 if b.fixed_rotation else b.J
    p = m * hd + imp - area * hd
    ll = jj * r + m * cross + ang - area * cross - i_s * r
    return np.array([p.real, p.imag, float(ll)])


def free_pair_impulse(pos: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Free-space vortex impulse (-sum Gamma x_perp, -1/2 sum Gamma |x|^2)."""
    z = pos[:, 0] + 1j * pos[:, 1]
    p = -1j * np.sum(gamma * z)
    return np.array([p.real, p.imag, -0.5 * np.sum(gamma * np.abs(z) ** 2)])


# --------------------------------------------------------------------------
# Sobolev energy proxies and the growth envelope
# --------------------------------------------------------------------------

PROXY_CORE = 0.25


def zeta_velocity_field(state: FlowState, grid, core: float = PROXY_CORE) -> np.ndarray:
    """Mapped-plane velocity (2, n_r+1, n_t) on an annular grid, particle cores smoothed."""
    zeta = grid.zeta()
    dw, _ = _zeta_plane_conj_velocity(state, zeta, core)
    if state.gamma_bound != 0.0:
        dw = dw + state.gamma_bound / (TWO_PI * 1j * zeta)
    u = np.conj(dw)
    return np.stack([u.real, u.imag])


def energy_proxies(state: FlowState, grid, orders: Sequence[int] = (1, 3)) -> dict[int, float]:
    """E_s proxy = ||u||_{H^s}^2 on the mapped-plane grid + m|h'|^2 + J r^2."""
    from .oracle import sobolev_norm

    u = zeta_velocity_field(state, grid)
    rigid = rigid_energy(state)
    return {s: sobolev_norm(u, grid, s) ** 2 + rigid for s in orders}


def bkm_record_ratio(state: FlowState, grid) -> float:
    from .oracle import GridField, d_x, d_y, l2_norm, measure_bkm_ratio, sobolev_norm

    u = zeta_velocity_field(state, grid)
    om = d_x(u[1], grid) - d_y(u[0], grid)
    return measure_bkm_ratio(grid, GridField(u, grid), GridField(om, grid), sobolev_norm(u, grid, 3), l2_norm(u, grid))


@dataclass(frozen=True)
class EnvelopeParams:
    K1: float
    K2: float
    K3: float
    E1_0: float
    E3_0: float

    def __post_init__(self):
        for name in ("K1", "K2", "K3"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.E1_0 < 0 or self.E3_0 < 0:
            raise ValueError("initial energies must be >= 0")


def envelope(params: EnvelopeParams, t: float, Es0: float) -> float:
    """K1 Es0 exp(integral_0^t lambda), lambda(tau) = K2 (1+sqrt E1)(1+ln+ sqrt E3) exp(K3 (1+sqrt E1) tau)."""
    a = 1.0 + math.sqrt(params.E1_0)
    lnp = max(0.0, math.log(math.sqrt(params.E3_0))) if params.E3_0 > 0 else 0.0
    c = params.K3 * a
    try:
        integral = params.K2 * a * (1.0 + lnp) * math.expm1(c * t) / c
        return params.K1 * Es0 * math.exp(integral)
    except OverflowError:
        return math.inf


def _constants_path():
    from importlib.resources import files

    return files("exeuler").joinpath("envelope_constants.json")


def frozen_constants() -> dict[str, float]:
    """Calibrated K1, K2, K3 shipped with the package."""
    return json.loads(_constants_path().read_text())


def calibrate(ratio_max: float, K2: float = 0.01, K3: float = 0.01, safety: float = 2.0) -> dict[str, float]:
    """K1 from the worst E_s(t)/E_s(0) of the reference run, with a safety factor."""
    k1 = max(1.0, safety * ratio_max)
    return {"K1": float(math.ceil(k1 * 100) / 100), "K2": K2, "K3": K3}


@dataclass
class EnvelopeReport:
    ok: bool
    min_margin: float
    worst_time: float
    n_records: int


def check_envelope(records: Iterable["DiagnosticsRecord"], params: EnvelopeParams, s: int = 3) -> EnvelopeReport:
    """Verify Es_proxy(t) <= envelope(t) on every record; EnvelopeViolated otherwise."""
    recs = list(records)
    if not recs:
        return EnvelopeReport(True, math.inf, 0.0, 0)
    es0 = recs[0].Es_proxy
    worst, wt = math.inf, recs[0].time
    for r in recs:
        env = envelope(params, r.time - recs[0].time, es0)
        margin = (env - r.Es_proxy) / env if env > 0 else (0.0 if r.Es_proxy <= 0 else -math.inf)
        if margin < worst:
            worst, wt = margin, r.time
    if worst < 0:
        raise EnvelopeViolated(f"energy proxy above envelope at t={wt:.6g} (margin {worst:.3e})")
    return EnvelopeReport(True, worst, wt, len(recs))


# --------------------------------------------------------------------------
# Records
# --------------------------------------------------------------------------


@dataclass
class DiagnosticsRecord:
    time: float
    step: int
    circulation_total: float
    impulse: list[float]
    E0_grid: float | None
    E0_exact: float | None
    omega_inf_surrogate: float
    bkm_ratio: float | None
    Es_proxy: float
    envelope_value: float
    radius_drift: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=False, allow_nan=False)

    CSV_FIELDS = (
        "time", "step", "circulation_total", "impulse_x", "impulse_y", "impulse_ang",
        "E0_grid", "E0_exact", "omega_inf_surrogate", "bkm_ratio", "Es_proxy", "envelope_value", "radius_drift",
    )

    def csv_row(self) -> list:
        d = asdict(self)
        imp = d.pop("impulse")
        vals = {**d, "impulse_x": imp[0], "impulse_y": imp[1], "impulse_ang": imp[2]}
        return ["" if vals[k] is None else repr(vals[k]) for k in self.CSV_FIELDS]


class DiagnosticsMonitor:
    """Builds one DiagnosticsRecord per emitted state, relative to the initial state."""

    def __init__(
        self,
        state0: FlowState,
        grid,
        constants: dict[str, float] | None = None,
        quad: EnergyQuadrature | None = None,
        with_bkm: bool = True,
        s: int = 3,
    ):
        self.grid = grid
        self.quad = quad or EnergyQuadrature()
        self.with_bkm = with_bkm
        self.s = s
        self.circ0 = state0.circulation_total
        self.r0 = np.abs(state0.pos_c)
        px = energy_proxies(state0, grid, sorted({1, 3, s}))
        self.Es0 = px[s]
        k = constants or frozen_constants()
        self.params = EnvelopeParams(k["K1"], k["K2"], k["K3"], px[1], px[3])
        g = np.abs(state0.gamma)
        self.omega_inf = float(g.max() / (math.pi * self.quad.core**2)) if g.size else 0.0
        self.records: list[DiagnosticsRecord] = []

    def __call__(self, step: int, state: FlowState) -> DiagnosticsRecord:
        if state.circulation_total != self.circ0:
            raise AssertionError("total circulation changed during the run")
        finite = state.gamma_bound == 0.0
        es = energy_proxies(state, self.grid, (self.s,))[self.s]
        rec = DiagnosticsRecord(
            time=float(state.time),
            step=int(step),
            circulation_total=state.circulation_total,
            impulse=[float(v) for v in impulse(state)],
            E0_grid=energy_E0(state, self.quad) if finite else None,
            E0_exact=energy_E0_exact(state) if finite else None,
            omega_inf_surrogate=self.omega_inf,
            bkm_ratio=bkm_record_ratio(state, self.grid) if self.with_bkm else None,
            Es_proxy=float(es),
            envelope_value=envelope(self.params, state.time, self.Es0),
            radius_drift=float(np.max(np.abs(np.abs(state.pos_c) - self.r0))) if self.r0.size else 0.0,
        )
        self.records.append(rec)
        return rec
