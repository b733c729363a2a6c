"""Validation suites behind ``exeuler validate``.

Each suite returns a list of Check rows; a suite passes iff every row does.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .conformal import (
    BodyShape,
    boundary_residual,
    build_map,
    cauchy_riemann_residual,
    exterior_samples,
    map_forward,
    map_inverse,
    map_jacobian,
)
from .diagnostics import DiagnosticsMonitor
from .dynamics import IntegratorConfig, run, step
from .fieldkernels import green_c, green_function, self_conj_velocity_c
from .oracle import (
    AnnularGrid,
    bkm_for_vorticity,
    bump,
    default_family,
    gaussian,
    manufactured_errors,
    measure_poisson_constants,
    observed_orders,
    poisson_ratios,
    solve_exterior,
)
from .scenario import load_shipped


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    limit: float
    kind: str = "max"  # "max": value < limit, "min": value >= limit

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        return self.value < self.limit if self.kind == "max" else self.value >= self.limit

    def row(self) -> str:
        op = "<" if self.kind == "max" else ">="
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<44} {self.value:.3e} {op} {self.limit:.1e}"


# --------------------------------------------------------------------------
# Conformal
# --------------------------------------------------------------------------


def reference_shape() -> BodyShape:
    """Smooth non-symmetric polyline used wherever a general body is needed."""
    t = 2 * np.pi * np.arange(128) / 128
    r = 1.0 + 0.1 * np.cos(3 * t) + 0.05 * np.sin(2 * t)
    return BodyShape.polyline(np.stack([r * np.cos(t), r * np.sin(t)], axis=1))


def ellipse_boundary_deviation(a: float = 2.0, b: float = 1.0, n: int = 1000) -> float:
    cmap = build_map(BodyShape.ellipse(a, b))
    z = cmap.inverse_c(np.exp(2j * np.pi * np.arange(n) / n))
    return float(np.max(np.abs((z.real / a) ** 2 + (z.imag / b) ** 2 - 1.0)))


def conformal_suite(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    for label, shape in (("ellipse(2,1)", BodyShape.ellipse(2.0, 1.0)), ("polyline", reference_shape())):
        cmap = build_map(shape)
        x = exterior_samples(cmap, 1000, rng)
        pts = np.stack([x.real, x.imag], axis=1)
        back = map_inverse(cmap, map_forward(cmap, pts))
        out.append(Check(f"roundtrip {label}", float(np.max(np.abs(back - pts))), 1e-9))
        out.append(Check(f"Cauchy-Riemann {label}", cauchy_riemann_residual(map_jacobian(cmap, pts)), 1e-10))
        out.append(Check(f"boundary fit {label}", boundary_residual(cmap, shape.boundary(512)), 1e-6))
    out.append(Check("ellipse(2,1) boundary image", ellipse_boundary_deviation(), 1e-8))
    return out


# --------------------------------------------------------------------------
# Poisson / Green's function
# --------------------------------------------------------------------------


def green_boundary_and_symmetry(seed: int = 0) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    cmap = build_map(reference_shape())
    y = exterior_samples(cmap, 100, rng)
    xb = cmap.inverse_c(np.exp(2j * np.pi * rng.random(100)))
    pt = lambda z: np.stack([z.real, z.imag], axis=1)
    vanish = float(np.max(np.abs(green_function(cmap, pt(xb), pt(y)))))
    x = exterior_samples(cmap, 100, rng)
    g1 = green_function(cmap, pt(x), pt(y))
    g2 = green_function(cmap, pt(y), pt(x))
    return vanish, float(np.max(np.abs(g1 - g2)) / np.max(np.abs(g1)))


def gaussian_blob_errors(levels=(64, 128, 256), sigma: float = 0.15, center: float = 2.0) -> list[float]:
    """Relative error of the grid solver against direct Green quadrature, outside 6 sigma.

    Comparison nodes are those of the coarsest grid, shared by every level.
    """
    hq = sigma / 8
    ax = np.arange(-6 * sigma, 6 * sigma + hq / 2, hq)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    src = (center + X + 1j * Y).ravel()
    wq = (np.exp(-(X**2 + Y**2) / (2 * sigma**2)) * hq * hq).ravel()
    coarse = AnnularGrid(6.0, levels[0], 4 * levels[0])
    zc = coarse.zeta()
    mask = np.abs(zc - center) > 6 * sigma
    zt = zc[mask]
    ref = np.concatenate([(green_c(zt[i : i + 256, None], src[None, :]) * wq).sum(1) for i in range(0, len(zt), 256)])
    errs = []
    for n in levels:
        g = AnnularGrid(6.0, n, 4 * n)
        psi = solve_exterior(g, gaussian(g, center, sigma))
        s = n // levels[0]
        errs.append(float(np.max(np.abs(psi.values[::s, ::s][mask] - ref)) / np.max(np.abs(ref))))
    return errs


def poisson_suite() -> list[Check]:
    vanish, sym = green_boundary_and_symmetry()
    errs = gaussian_blob_errors()
    mms = manufactured_errors([AnnularGrid(6.0, n, 2 * n) for n in (128, 256, 512)])
    return [
        Check("Green vanishing on boundary", vanish, 1e-12),
        Check("Green symmetry (100 pairs)", sym, 1e-12),
        Check("Gaussian blob vs Green quadrature", errs[-1], 1e-3),
        Check("Gaussian blob convergence order", min(observed_orders(errs)), 1.9, "min"),
        Check("manufactured solution order", min(observed_orders(mms)), 1.9, "min"),
    ]


# --------------------------------------------------------------------------
# Estimates
# --------------------------------------------------------------------------


def bkm_sweep(grid: AnnularGrid, amplitudes=(1.0, 10.0, 100.0), center: float = 2.0, radius: float = 0.6) -> list[dict]:
    return [{"amplitude": a, **bkm_for_vorticity(grid, bump(grid, center, radius, a))} for a in amplitudes]


def amplitude_invariance(grid: AnnularGrid, factor: float = 7.0) -> float:
    worst = 0.0
    for om in default_family(grid):
        r1 = poisson_ratios(grid, om)
        r2 = poisson_ratios(grid, type(om)(factor * om.values, grid))
        for k in r1:
            worst = max(worst, abs(r1[k] - r2[k]) / max(abs(r1[k]), 1e-300))
    return worst


def bkm_suite(grid: AnnularGrid | None = None) -> list[Check]:
    grid = grid or AnnularGrid(6.0, 128, 256)
    rows = bkm_sweep(grid)
    ratios = [r["ratio"] for r in rows]
    fine = bkm_for_vorticity(grid.refined(), bump(grid.refined(), 2.0, 0.6))["ratio"]
    consts = measure_poisson_constants(grid, default_family(grid))
    consts_f = measure_poisson_constants(grid.refined(), default_family(grid.refined()))
    refine = max(
        abs(fine - ratios[0]) / ratios[0],
        *(abs(consts_f[k] - consts[k]) / consts[k] for k in ("poisson1_max", "poisson2_max")),
    )
    return [
        Check("ratio amplitude invariance", amplitude_invariance(grid), 1e-10),
        Check("BKM ratio spread over x{1,10,100}", max(ratios) / min(ratios), 2.0),
        Check("refinement stability", refine, 0.10),
    ]


# --------------------------------------------------------------------------
# Dynamics and conservation
# --------------------------------------------------------------------------


def milne_thomson_conj_velocity(a: float, gamma: float, gamma_bound: float) -> complex:
    """u - iv of a point vortex at (a, 0) outside the fixed unit disk.

    Images: -gamma at 1/a and gamma_bound at the centre, so that the far
    field carries circulation gamma_bound.
    """
    return (gamma * (-1.0 / (a - 1.0 / a)) + gamma_bound / a) / (2j * math.pi)


def self_advection_error() -> float:
    s = load_shipped("vortex_orbit").initial_state()
    a = float(abs(s.pos_c[0]))
    w = self_conj_velocity_c(s.cmap, s.pos_c, s.gamma, np.zeros(1))
    w = w + s.gamma_bound / (2j * math.pi * s.pos_c)
    exact = milne_thomson_conj_velocity(a, float(s.gamma[0]), s.gamma_bound)
    return float(abs(w[0] - exact) / abs(exact))


def orbit_radius_drift(dt: float = 1e-3, T: float = 10.0) -> float:
    s0 = load_shipped("vortex_orbit").initial_state()
    r0 = abs(s0.pos_c[0])
    drift = [0.0]

    def sink(_k, s):
        drift[0] = max(drift[0], float(abs(abs(s.pos_c[0]) - r0)))

    run(s0, IntegratorConfig(dt), T, [sink], dump_every=1)
    return drift[0]


def rk4_richardson_order(dts=(1.0, 0.5, 0.25), T: float = 12.0) -> float:
    """log2 of successive differences of the orbit end point at halved steps."""
    s0 = load_shipped("vortex_orbit").initial_state()
    ends = []
    for dt in dts:
        s = s0
        for _ in range(int(round(T / dt))):
            s = step(s, IntegratorConfig(dt))
        ends.append(s.pos_c[0])
    d1, d2 = abs(ends[0] - ends[1]), abs(ends[1] - ends[2])
    return math.log2(d1 / d2)


def calibrate_envelope(dt: float = 1e-3) -> dict[str, float]:
    """Envelope constants from the vortex_orbit reference run (Es ratio over the whole run)."""
    from .diagnostics import calibrate

    sc = load_shipped("vortex_orbit")
    s0 = sc.initial_state()
    mon = DiagnosticsMonitor(s0, sc.grid, constants={"K1": 1.0, "K2": 1.0, "K3": 1.0}, with_bkm=False)
    run(s0, IntegratorConfig(dt), sc.T, [mon], dump_every=sc.dump_every)
    return calibrate(max(r.Es_proxy for r in mon.records) / mon.records[0].Es_proxy)


def conservation_run(dt: float = 1e-3, T: float = 10.0, dump_every: int = 500) -> list:
    sc = load_shipped("free_disk_pair")
    s0 = sc.initial_state()
    mon = DiagnosticsMonitor(s0, sc.grid, with_bkm=False)
    run(s0, IntegratorConfig(dt), T, [mon], dump_every=dump_every)
    return mon.records


def conservation_metrics(records) -> dict[str, float]:
    e0 = records[0].E0_grid
    p0 = np.asarray(records[0].impulse)
    return {
        "circulation_bits_equal": float(len({r.circulation_total.hex() for r in records}) == 1),
        "energy_drift": max(abs(r.E0_grid - e0) for r in records) / abs(e0),
        "impulse_drift": max(float(np.linalg.norm(np.asarray(r.impulse) - p0)) for r in records) / float(np.linalg.norm(p0)),
    }


def conservation_suite() -> list[Check]:
    m = conservation_metrics(conservation_run())
    order = rk4_richardson_order()
    return [
        Check("circulation bit-identical", m["circulation_bits_equal"], 1.0, "min"),
        Check("E0 grid relative drift", m["energy_drift"], 1e-3),
        Check("impulse relative drift", m["impulse_drift"], 1e-3),
        Check("orbit radius drift", orbit_radius_drift(), 1e-6),
        Check("Milne-Thomson self-advection", self_advection_error(), 1e-8),
        Check("RK4 Richardson order (low)", order, 3.7, "min"),
        Check("RK4 Richardson order (high)", order, 4.3),
    ]


SUITES: dict[str, Callable[[], list[Check]]] = {
    "conformal": conformal_suite,
    "poisson": poisson_suite,
    "bkm": bkm_suite,
    "conservation": conservation_suite,
}


def run_suite(name: str) -> tuple[list[Check], float]:
    t0 = time.perf_counter()
    checks = SUITES[name]()
    return checks, time.perf_counter() - t0
