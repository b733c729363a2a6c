"""Finite-difference machinery on annular grids in the mapped plane.

Everything here lives on 1 <= |zeta| <= R_outer with a uniform polar grid
(radius uniform, angle periodic).  The Poisson solver is the standard
second-order five-point polar scheme, diagonalised by an FFT in angle and
closed by a tridiagonal solve in radius for every Fourier mode.

Derivatives for the norm measurements are fourth-order: centred stencils
in the interior, one-sided five-point stencils at the two radial ends.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .errors import SolverStagnated
from .fieldkernels import TWO_PI


@dataclass(frozen=True)
class AnnularGrid:
    R_outer: float = 6.0
    n_r: int = 128
    n_t: int = 256
    R_inner: float = 1.0

    def __post_init__(self):
        if self.n_r < 16 or self.n_t < 16:
            raise ValueError("n_r and n_t must be >= 16")
        if not self.R_outer >= 4:
            raise ValueError("R_outer must be >= 4")
        if self.R_inner != 1.0:
            raise ValueError("the mapped-plane grid starts at radius 1")

    @property
    def hr(self) -> float:
        return (self.R_outer - self.R_inner) / self.n_r

    @property
    def ht(self) -> float:
        return TWO_PI / self.n_t

    @property
    def r(self) -> np.ndarray:
        """Radii of the n_r + 1 rings, inner and outer boundary included."""
        return self.R_inner + self.hr * np.arange(self.n_r + 1)

    @property
    def theta(self) -> np.ndarray:
        return self.ht * np.arange(self.n_t)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_r + 1, self.n_t)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.r, self.theta, indexing="ij")

    def zeta(self) -> np.ndarray:
        rr, tt = self.mesh()
        return rr * np.exp(1j * tt)

    def weights(self) -> np.ndarray:
        """Area weights r dr dtheta (trapezoid in r, periodic in theta)."""
        wr = np.full(self.n_r + 1, self.hr)
        wr[[0, -1]] *= 0.5
        return (wr * self.r)[:, None] * np.full(self.n_t, self.ht)[None, :]

    def refined(self, factor: int = 2) -> "AnnularGrid":
        return AnnularGrid(self.R_outer, self.n_r * factor, self.n_t * factor)

    def to_dict(self) -> dict:
        return {"R_outer": self.R_outer, "n_r": self.n_r, "n_t": self.n_t}


@dataclass(frozen=True)
class GridField:
    """Values on grid nodes: shape (n_r+1, n_t) for scalars, (2, n_r+1, n_t) for vectors."""

    values: np.ndarray
    grid: AnnularGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[-2:] != self.grid.shape or v.ndim not in (2, 3):
            raise ValueError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.isfinite(v).all():
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: AnnularGrid, vector: bool = False) -> "GridField":
        return cls(np.zeros(((2,) if vector else ()) + grid.shape), grid)


# --------------------------------------------------------------------------
# Poisson solver
# --------------------------------------------------------------------------


def _mode_eigs(grid: AnnularGrid) -> np.ndarray:
    k = np.fft.fftfreq(grid.n_t, 1.0 / grid.n_t)
    return -4.0 / grid.ht**2 * np.sin(k * grid.ht / 2) ** 2


def discrete_laplacian(grid: AnnularGrid, psi: np.ndarray) -> np.ndarray:
    """Five-point polar Laplacian at the interior rings (rows 1..n_r-1)."""
    r = grid.r[1:-1, None]
    h = grid.hr
    pm, p0, pp = psi[:-2], psi[1:-1], psi[2:]
    lap_r = (pp - 2 * p0 + pm) / h**2 + (pp - pm) / (2 * h * r)
    lap_t = (np.roll(p0, -1, axis=1) - 2 * p0 + np.roll(p0, 1, axis=1)) / (grid.ht**2 * r**2)
    return lap_r + lap_t


def solve_poisson_fd(grid: AnnularGrid, omega: GridField, outer_bc: GridField | np.ndarray | None = None) -> GridField:
    """Solve Laplacian psi = omega, psi = 0 on |zeta| = 1, psi = outer_bc on |zeta| = R_outer."""
    w = np.asarray(omega.values if isinstance(omega, GridField) else omega, dtype=float)
    if w.shape != grid.shape:
        raise ValueError("omega must be a scalar field on the grid")
    if outer_bc is None:
        g = np.zeros(grid.n_t)
    else:
        g = np.asarray(outer_bc.values if isinstance(outer_bc, GridField) else outer_bc, dtype=float)
        g = g[-1] if g.ndim == 2 else g
    n = grid.n_r - 1
    r = grid.r[1:-1]
    h = grid.hr
    lo = 1.0 / h**2 - 1.0 / (2 * h * r)
    up = 1.0 / h**2 + 1.0 / (2 * h * r)
    wh = np.fft.fft(w[1:-1], axis=1)
    gh = np.fft.fft(g)
    wh[-1] -= up[-1] * gh
    eig = _mode_eigs(grid)
    out = np.empty((n, grid.n_t), dtype=complex)
    ab = np.zeros((3, n))
    ab[0, 1:] = up[:-1]
    ab[2, :-1] = lo[1:]
    for k in range(grid.n_t):
        ab[1] = -2.0 / h**2 + eig[k] / r**2
        out[:, k] = solve_banded((1, 1), ab, wh[:, k])
    psi = np.zeros(grid.shape)
    psi[1:-1] = np.real(np.fft.ifft(out, axis=1))
    psi[-1] = g
    res = discrete_laplacian(grid, psi) - w[1:-1]
    scale = max(1.0, float(np.max(np.abs(w))), float(np.max(np.abs(psi))) / h**2)
    if not np.isfinite(psi).all() or np.max(np.abs(res)) > 1e-10 * scale:
        raise SolverStagnated(f"discrete residual {np.max(np.abs(res)):.3e}")
    return GridField(psi, grid)


def far_field_bc(grid: AnnularGrid, omega: GridField, terms: int = 32) -> GridField:
    """Outer Dirichlet data from the multipole expansion of the exterior Green's function.

    psi(zeta) = sum_k q_k (1/2pi) [-ln|eta_k| - Re sum_n (eta_k^n - conj(eta_k)^-n) / (n zeta^n)],
    q_k = omega_k dA_k, valid outside the support of omega.
    """
    w = np.asarray(omega.values if isinstance(omega, GridField) else omega) * grid.weights()
    nz = np.nonzero(w)
    q = w[nz]
    eta = grid.zeta()[nz]
    zo = grid.R_outer * np.exp(1j * grid.theta)
    val = np.full(grid.n_t, -np.sum(q * np.log(np.abs(eta))))
    for n in range(1, terms + 1):
        mom = np.sum(q * (eta**n - np.conj(eta) ** (-n))) / n
        val -= np.real(mom / zo**n)
    out = np.zeros(grid.shape)
    out[-1] = val / TWO_PI
    return GridField(out, grid)


def solve_exterior(grid: AnnularGrid, omega: GridField) -> GridField:
    return solve_poisson_fd(grid, omega, far_field_bc(grid, omega))


# --------------------------------------------------------------------------
# Derivatives and norms
# --------------------------------------------------------------------------

_C1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
# one-sided fourth-order first-derivative stencils at offsets 0 and 1 from an end
_E0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_E1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def d_r(f: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(f)
    out[2:-2] = sum(c * f[i : len(f) - 4 + i] for i, c in enumerate(_C1))
    out[0] = _E0 @ f[:5].reshape(5, -1)
    out[1] = _E1 @ f[:5].reshape(5, -1)
    out[-1] = -(_E0 @ f[::-1][:5].reshape(5, -1))
    out[-2] = -(_E1 @ f[::-1][:5].reshape(5, -1))
    return out / h


def d_t(f: np.ndarray, h: float) -> np.ndarray:
    return sum(c * np.roll(f, 2 - i, axis=-1) for i, c in enumerate(_C1)) / h


def d_x(f: np.ndarray, grid: AnnularGrid) -> np.ndarray:
    rr, tt = grid.mesh()
    return np.cos(tt) * d_r(f, grid.hr) - np.sin(tt) / rr * d_t(f, grid.ht)


def d_y(f: np.ndarray, grid: AnnularGrid) -> np.ndarray:
    rr, tt = grid.mesh()
    return np.sin(tt) * d_r(f, grid.hr) + np.cos(tt) / rr * d_t(f, grid.ht)


def l2_norm(f: np.ndarray, grid: AnnularGrid) -> float:
    f = np.asarray(f)
    sq = f**2 if f.ndim == 2 else np.sum(f**2, axis=0)
    return float(math.sqrt(np.sum(sq * grid.weights())))


def derivative_tower(f: np.ndarray, grid: AnnularGrid, order: int) -> list[list[np.ndarray]]:
    """tower[k] = all distinct derivatives d_x^a d_y^b f with a + b = k."""
    tower = [[f]]
    for k in range(1, order + 1):
        prev = tower[-1]
        row = [d_x(prev[0], grid)] + [d_y(p, grid) for p in prev]
        tower.append(row)
    return tower


def sobolev_norm(u: np.ndarray, grid: AnnularGrid, s: int) -> float:
    """H^s norm of a scalar or vector grid field (sum over distinct multi-indices)."""
    comps = [u] if np.ndim(u) == 2 else list(u)
    total = 0.0
    for c in comps:
        for row in derivative_tower(c, grid, s):
            for d in row:
                total += l2_norm(d, grid) ** 2
    return math.sqrt(total)


def velocity_from_psi(psi: GridField) -> GridField:
    g = psi.grid
    return GridField(np.stack([-d_y(psi.values, g), d_x(psi.values, g)]), g)


def grad_sup(u: GridField) -> float:
    g = u.grid
    sq = sum(d_x(c, g) ** 2 + d_y(c, g) ** 2 for c in u.values)
    return float(np.sqrt(np.max(sq)))


def hessian_l2(psi: GridField) -> float:
    g = psi.grid
    rr = g.mesh()[0]
    p = psi.values
    pr = d_r(p, g.hr)
    pt = d_t(p, g.ht)
    hrr = d_r(pr, g.hr)
    hrt = d_r(pt / rr, g.hr)
    htt = d_t(pt, g.ht) / rr**2 + pr / rr
    return l2_norm(np.sqrt(hrr**2 + 2 * hrt**2 + htt**2), g)


# --------------------------------------------------------------------------
# Test fields
# --------------------------------------------------------------------------


def bump(grid: AnnularGrid, center: complex, radius: float, amplitude: float = 1.0) -> GridField:
    """Compactly supported C^3 bump amplitude * (1 - d^2/radius^2)^4."""
    d2 = np.abs(grid.zeta() - center) ** 2 / radius**2
    return GridField(amplitude * np.where(d2 < 1, (1 - d2) ** 4, 0.0), grid)


def gaussian(grid: AnnularGrid, center: complex, sigma: float, amplitude: float = 1.0) -> GridField:
    d2 = np.abs(grid.zeta() - center) ** 2
    return GridField(amplitude * np.exp(-d2 / (2 * sigma**2)), grid)


# --------------------------------------------------------------------------
# Measurements
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Report:
    estimate_id: str
    parameters: dict
    ratio: float

    def to_json(self) -> str:
        return json.dumps({"estimate_id": self.estimate_id, "parameters": self.parameters, "ratio": self.ratio}, sort_keys=True)


def support_radius(omega: GridField) -> float:
    r = omega.grid.r
    rows = np.nonzero(np.any(omega.values != 0, axis=1))[0]
    return float(r[rows.max()]) if rows.size else float(r[0])


def poisson_ratios(grid: AnnularGrid, omega: GridField) -> dict[str, float]:
    """Ratios of the two elliptic estimates for one vorticity field.

    poisson1 = ||grad psi||_{H^1} / ||omega||_{L^2}
    poisson2 = ||D^2 psi||_{L^2} / (||omega||_{L^2} + ||grad psi||_{L^2})
    """
    psi = solve_exterior(grid, omega)
    u = velocity_from_psi(psi)
    w2 = l2_norm(omega.values, grid)
    if w2 == 0:
        return {"poisson1": 0.0, "poisson2": 0.0}
    g0 = l2_norm(u.values, grid)
    h2 = hessian_l2(psi)
    return {"poisson1": math.sqrt(g0**2 + h2**2) / w2, "poisson2": h2 / (w2 + g0)}


def measure_poisson_constants(grid: AnnularGrid, family: Sequence[GridField]) -> dict:
    """Max ratios over the family plus a per-support-radius breakdown.

    Every member must be supported within R_outer / 2.
    """
    rows = []
    for i, om in enumerate(family):
        rs = support_radius(om)
        if rs > grid.R_outer / 2:
            raise ValueError(f"family member {i} extends to radius {rs:.3g} > R_outer/2")
        rows.append({"member": i, "support_radius": rs, **poisson_ratios(grid, om)})
    out = {"grid": grid.to_dict(), "members": rows}
    for key in ("poisson1", "poisson2"):
        vals = [r[key] for r in rows]
        out[f"{key}_max"] = max(vals) if vals else 0.0
    p2 = [r["poisson2"] for r in rows if r["poisson2"] > 0]
    out["poisson2_spread"] = (max(p2) / min(p2)) if p2 else 1.0
    return out


def reports_from_constants(result: dict, extra: dict | None = None) -> list[Report]:
    out = []
    for row in result["members"]:
        for key in ("poisson1", "poisson2"):
            params = {"grid": result["grid"], "member": row["member"], "support_radius": row["support_radius"]}
            params.update(extra or {})
            out.append(Report(key, params, row[key]))
    return out


def measure_bkm_ratio(grid: AnnularGrid, velocity: GridField, omega: GridField, sobolev3: float, l2: float) -> float:
    """||grad u||_inf / [(1 + ln+ sobolev3)(1 + l2 + ||omega||_inf)] on the grid."""
    num = grad_sup(velocity)
    if num == 0:
        return 0.0
    lnp = max(0.0, math.log(sobolev3)) if sobolev3 > 0 else 0.0
    return num / ((1.0 + lnp) * (1.0 + l2 + float(np.max(np.abs(omega.values)))))


def bkm_for_vorticity(grid: AnnularGrid, omega: GridField) -> dict[str, float]:
    psi = solve_exterior(grid, omega)
    u = velocity_from_psi(psi)
    s3 = sobolev_norm(u.values, grid, 3)
    l2 = l2_norm(u.values, grid)
    return {
        "ratio": measure_bkm_ratio(grid, u, omega, s3, l2),
        "grad_u_inf": grad_sup(u),
        "omega_inf": float(np.max(np.abs(omega.values))),
        "u_H3": s3,
        "u_L2": l2,
    }


def default_family(grid: AnnularGrid, radii: Iterable[float] = (2.0, 3.0), amplitude: float = 1.0) -> list[GridField]:
    """Bumps filling 1 < |zeta| < R for each support radius R, at two angles."""
    fam = []
    for rs in radii:
        c = 0.5 * (1.0 + rs)
        rad = 0.45 * (rs - 1.0)
        for ang in (0.0, 2.0):
            fam.append(bump(grid, c * np.exp(1j * ang), rad, amplitude))
    return fam


def manufactured_psi(grid: AnnularGrid, L: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """(psi_m, Laplacian psi_m) for psi_m = sin^4(pi (r-1)/L) (1 + 0.5 cos 2t + 0.3 sin 3t), r < 1 + L."""
    rr, tt = grid.mesh()
    a = math.pi / L
    x = a * (rr - 1.0)
    inside = rr <= 1.0 + L
    s, c = np.sin(x), np.cos(x)
    f = np.where(inside, s**4, 0.0)
    fr = np.where(inside, 4 * a * s**3 * c, 0.0)
    frr = np.where(inside, a * a * (12 * s**2 * c**2 - 4 * s**4), 0.0)
    g = 1 + 0.5 * np.cos(2 * tt) + 0.3 * np.sin(3 * tt)
    gtt = -2.0 * np.cos(2 * tt) - 2.7 * np.sin(3 * tt)
    lap = (frr + fr / rr) * g + f * gtt / rr**2
    return f * g, lap


def manufactured_errors(levels: Sequence[AnnularGrid], L: float = 2.0) -> list[float]:
    errs = []
    for g in levels:
        psi_m, lap = manufactured_psi(g, L)
        psi = solve_poisson_fd(g, GridField(lap, g))
        errs.append(float(np.max(np.abs(psi.values - psi_m))))
    return errs


def observed_orders(errors: Sequence[float]) -> list[float]:
    return [math.log2(errors[i] / errors[i + 1]) for i in range(len(errors) - 1)]
