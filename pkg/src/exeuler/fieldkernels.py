"""Green's function, image kernels and the velocity components of the fluid.

All quantities live in the body frame.  Complex notation throughout:
a velocity (u, v) is handled as its conjugate ``u - i v = dw/dz`` of a
complex potential w, with stream function psi = -Im w so that
u = grad-perp psi = (-d2 psi, d1 psi).

For sources eta_j = T(y_j) and target zeta = T(x),

    u - i v = T'(x) * sum_j Gamma_j / (2 pi i) * [1/(zeta - eta_j) - 1/(zeta - eta_j^*)]

which is grad-perp of sum_j Gamma_j G_F(x, y_j).  Source sums are done per
target with numpy's pairwise reduction over the source axis, so results do
not depend on how targets are split between worker threads.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike

from .conformal import ComplexArray, ConformalMap, FloatArray, _horner, as_complex, as_points
from .errors import CoincidentPoints, ExpansionDiverged

TWO_PI = 2.0 * np.pi
CHUNK = 2048


@dataclass(frozen=True)
class VortexParticle:
    pos: tuple[float, float]
    gamma: float

    def __post_init__(self):
        p = tuple(float(c) for c in self.pos)
        if len(p) != 2 or not all(np.isfinite(p)) or not np.isfinite(self.gamma):
            raise ValueError("particle position and circulation must be finite")
        object.__setattr__(self, "pos", p)
        object.__setattr__(self, "gamma", float(self.gamma))


@dataclass(frozen=True)
class BlobParameter:
    delta: float = 0.0

    def __post_init__(self):
        if not (self.delta >= 0 and np.isfinite(self.delta)):
            raise ValueError("blob radius must be finite and >= 0")


@dataclass(frozen=True)
class BodyMotion:
    """Rigid velocity in the body frame: translation ``ell`` and spin ``r``."""

    ell: tuple[float, float] = (0.0, 0.0)
    r: float = 0.0

    @property
    def ell_c(self) -> complex:
        return complex(self.ell[0], self.ell[1])


def _threads(n: int | None) -> int:
    if n is not None:
        return max(1, int(n))
    env = os.environ.get("EXEULER_THREADS")
    return max(1, int(env)) if env else 1


def particle_arrays(particles: Sequence[VortexParticle]) -> tuple[ComplexArray, FloatArray]:
    if len(particles) == 0:
        return np.zeros(0, dtype=complex), np.zeros(0)
    pos = np.array([complex(*p.pos) for p in particles])
    gam = np.array([p.gamma for p in particles], dtype=float)
    return pos, gam


# --------------------------------------------------------------------------
# Scalar kernels
# --------------------------------------------------------------------------

def inversion_point(xi: ArrayLike) -> FloatArray:
    """xi* = xi / |xi|^2, the reflection across the unit circle."""
    x = np.asarray(xi, dtype=float)
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    if np.any(r2 < (1 - 1e-12) ** 2):
        raise ValueError("inversion_point requires |xi| >= 1")
    return x / r2


def green_c(zeta: ComplexArray, eta: ComplexArray) -> FloatArray:
    """G_F in mapped coordinates: (1/2pi) ln(|zeta-eta| / |zeta conj(eta) - 1|)."""
    return np.log(np.abs(zeta - eta) / np.abs(zeta * np.conj(eta) - 1.0)) / TWO_PI


def green_function(cmap: ConformalMap, x: ArrayLike, y: ArrayLike) -> FloatArray | float:
    zx = cmap.forward_c(as_complex(x))
    zy = cmap.forward_c(as_complex(y))
    if np.any(zx == zy):
        raise CoincidentPoints("green_function needs x != y")
    g = green_c(zx, zy)
    return float(g) if np.ndim(g) == 0 else g


def _kernel(a: ComplexArray) -> FloatArray:
    return as_points(a / (np.abs(a) ** 2) / TWO_PI)


def kernel_K(cmap: ConformalMap, x: ArrayLike, y: ArrayLike) -> FloatArray:
    d = cmap.forward_c(as_complex(x)) - cmap.forward_c(as_complex(y))
    if np.any(d == 0):
        raise CoincidentPoints("kernel_K needs x != y")
    return _kernel(d)


def kernel_Kstar(cmap: ConformalMap, x: ArrayLike, y: ArrayLike) -> FloatArray:
    eta = cmap.forward_c(as_complex(y))
    return _kernel(cmap.forward_c(as_complex(x)) - 1.0 / np.conj(eta))


# --------------------------------------------------------------------------
# Particle-induced velocity
# --------------------------------------------------------------------------

def _sum_sources(zeta, eta, eta_star, gam, d2, exclude_diag_offset: int | None):
    """sum_j Gamma_j/(2 pi i) [conj(zeta-eta)/(|zeta-eta|^2+d2) - 1/(zeta-eta*)] for a target block."""
    dz = zeta[:, None] - eta[None, :]
    if exclude_diag_offset is not None:
        rows = np.arange(len(zeta))
        dz[rows, rows + exclude_diag_offset] = 1.0
    direct = np.conj(dz) / (np.abs(dz) ** 2 + d2[None, :])
    if exclude_diag_offset is not None:
        direct[rows, rows + exclude_diag_offset] = 0.0
    image = 1.0 / (zeta[:, None] - eta_star[None, :])
    return np.sum((direct - image) * gam[None, :], axis=1) / (TWO_PI * 1j)


def _blocked(fn, n: int, threads: int | None) -> ComplexArray:
    blocks = [(s, min(s + CHUNK, n)) for s in range(0, n, CHUNK)]
    nt = _threads(threads)
    if nt == 1 or len(blocks) == 1:
        parts = [fn(a, b) for a, b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=nt) as ex:
            parts = list(ex.map(lambda ab: fn(*ab), blocks))
    return np.concatenate(parts) if parts else np.zeros(0, dtype=complex)


def particle_conj_velocity_c(
    cmap: ConformalMap,
    z: ComplexArray,
    pos: ComplexArray,
    gam: FloatArray,
    delta: float | FloatArray = 0.0,
    threads: int | None = None,
) -> ComplexArray:
    """u - i v induced by particles at arbitrary fluid points ``z``."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if len(pos) == 0:
        return np.zeros(z.shape, dtype=complex)
    zeta = cmap.forward_c(z.ravel())
    eta = cmap.forward_c(pos)
    tp_src = 1.0 / np.abs(cmap.dinverse_c(eta))
    d2 = (np.broadcast_to(np.asarray(delta, dtype=float), eta.shape) * tp_src) ** 2
    eta_star = 1.0 / np.conj(eta)
    tp = 1.0 / cmap.dinverse_c(zeta)
    s = _blocked(lambda a, b: _sum_sources(zeta[a:b], eta, eta_star, gam, d2, None), len(zeta), threads)
    return (tp * s).reshape(z.shape)


def self_conj_velocity_c(
    cmap: ConformalMap,
    pos: ComplexArray,
    gam: FloatArray,
    delta: float | FloatArray = 0.0,
    threads: int | None = None,
    zeta: ComplexArray | None = None,
) -> ComplexArray:
    """u - i v at each particle from all particles.

    A particle's own direct term is dropped; its own image is kept and the
    Routh term Gamma/(2 pi i) * T''/(2 T') accounts for the map's
    distortion of the self-field, so the point-vortex dynamics stay
    Hamiltonian on every body shape.
    """
    n = len(pos)
    if n == 0:
        return np.zeros(0, dtype=complex)
    eta = cmap.forward_c(pos) if zeta is None else zeta
    d1 = cmap.dinverse_c(eta)
    tp = 1.0 / d1
    t2 = -cmap.d2inverse_c(eta) / d1**3
    d2 = (np.broadcast_to(np.asarray(delta, dtype=float), eta.shape) * np.abs(tp)) ** 2
    eta_star = 1.0 / np.conj(eta)
    s = _blocked(lambda a, b: _sum_sources(eta[a:b], eta, eta_star, gam, d2, a), n, threads)
    routh = gam / (TWO_PI * 1j) * t2 / (2.0 * tp)
    return tp * s + routh


def velocity_from_particles(
    cmap: ConformalMap,
    particles: Sequence[VortexParticle],
    x: ArrayLike,
    blob: BlobParameter = BlobParameter(),
    threads: int | None = None,
) -> FloatArray:
    """grad-perp of sum_j Gamma_j G_F(x, y_j), direct term blob-regularised."""
    pos, gam = particle_arrays(particles)
    z = as_complex(x)
    if len(pos) == 0:
        cmap.forward_c(z)
        return np.zeros(np.shape(x), dtype=float)
    if blob.delta == 0.0:
        hit = np.abs(np.atleast_1d(z).ravel()[:, None] - pos[None, :]) == 0
        if hit.any():
            raise CoincidentPoints("evaluation point coincides with a particle and delta = 0")
    w = particle_conj_velocity_c(cmap, z, pos, gam, blob.delta, threads)
    return as_points(np.conj(w))


# --------------------------------------------------------------------------
# Harmonic circulation field and Kirchhoff potentials
# --------------------------------------------------------------------------

def harmonic_conj_velocity_c(cmap: ConformalMap, z: ComplexArray, zeta: ComplexArray | None = None) -> ComplexArray:
    zeta = cmap.forward_c(z) if zeta is None else zeta
    return 1.0 / (cmap.dinverse_c(zeta) * TWO_PI * 1j * zeta)


def harmonic_circulation_field(cmap: ConformalMap, x: ArrayLike) -> FloatArray:
    """grad-perp of (1/2pi) ln|T(x)|: unit circulation, tangent on the body."""
    return as_points(np.conj(harmonic_conj_velocity_c(cmap, as_complex(x))))


def _kirchhoff_coeffs(cmap: ConformalMap) -> ComplexArray:
    n = max(256, 8 * (cmap.order + 4))
    th = TWO_PI * np.arange(n) / n
    z = cmap.inverse_c(np.exp(1j * th))
    # rigid stream functions on the boundary: x-, y-translation, rotation
    u = np.stack([-z.imag, z.real, 0.5 * np.abs(z) ** 2])
    uh = np.fft.fft(u, axis=1) / n
    kmax = n // 2 - 1
    a = -2j * np.conj(uh[:, 1 : kmax + 1])
    scale = np.max(np.abs(a)) + 1e-300
    tail = np.max(np.abs(a[:, kmax // 2 :])) / scale
    if tail > 1e-12:
        raise ExpansionDiverged(f"Kirchhoff coefficients do not decay (tail ratio {tail:.2e})")
    keep = int(np.max(np.nonzero(np.any(np.abs(a) > 1e-15 * scale, axis=0))[0], initial=0)) + 1
    out = np.ascontiguousarray(a[:, :keep])
    out.setflags(write=False)
    return out


def kirchhoff_coefficients(cmap: ConformalMap) -> ComplexArray:
    """Coefficients a[b, k-1] of W_b(zeta) = sum_k a_k zeta^-k for the unit motions b.

    The complex potential W_b has Im W_b = -U_b on |zeta| = 1, with U_b the
    stream function of the rigid motion (so grad-perp U_b is that motion).
    """
    return cmap.memo("kirchhoff", lambda: _kirchhoff_coeffs(cmap))


def kirchhoff_potential_c(cmap: ConformalMap, zeta: ComplexArray) -> ComplexArray:
    """The three complex potentials W_b(zeta), shape (3, ...)."""
    a = kirchhoff_coefficients(cmap)
    w = 1.0 / np.asarray(zeta, dtype=complex)
    return np.stack([w * _horner(a[b, ::-1], w) for b in range(3)])


def kirchhoff_dpotential_c(cmap: ConformalMap, zeta: ComplexArray) -> ComplexArray:
    """dW_b/dzeta, shape (3, ...)."""
    a = kirchhoff_coefficients(cmap)
    k = np.arange(1, a.shape[1] + 1)
    w = 1.0 / np.asarray(zeta, dtype=complex)
    return np.stack([-(w * w) * _horner((k * a[b])[::-1], w) for b in range(3)])


def kirchhoff_conj_velocity_c(
    cmap: ConformalMap, ell: complex, r: float, z: ComplexArray, zeta: ComplexArray | None = None
) -> ComplexArray:
    zeta = cmap.forward_c(z) if zeta is None else zeta
    if ell == 0 and r == 0:
        return np.zeros(np.shape(zeta), dtype=complex)
    a = kirchhoff_coefficients(cmap)
    coef = ell.real * a[0] + ell.imag * a[1] + r * a[2]
    k = np.arange(1, len(coef) + 1)
    w = 1.0 / np.asarray(zeta, dtype=complex)
    return -(w * w) * _horner((k * coef)[::-1], w) / cmap.dinverse_c(zeta)


def kirchhoff_velocity(cmap: ConformalMap, motion: BodyMotion, x: ArrayLike) -> FloatArray:
    """Potential flow whose normal trace matches the rigid motion on the body."""
    w = kirchhoff_conj_velocity_c(cmap, motion.ell_c, motion.r, as_complex(x))
    return as_points(np.conj(w))


def total_conj_velocity_c(cmap, pos, gam, ell, r, gamma_bound, z, delta=0.0, threads=None):
    z = np.asarray(z, dtype=complex)
    zeta = cmap.forward_c(z)
    out = kirchhoff_conj_velocity_c(cmap, ell, r, z, zeta)
    if gamma_bound != 0.0:
        out = out + gamma_bound * harmonic_conj_velocity_c(cmap, z, zeta)
    if len(pos):
        out = out + particle_conj_velocity_c(cmap, z, pos, gam, delta, threads)
    return out


def total_velocity(
    cmap: ConformalMap,
    particles: Sequence[VortexParticle],
    motion: BodyMotion,
    gamma_bound: float,
    x: ArrayLike,
    blob: BlobParameter = BlobParameter(),
    threads: int | None = None,
) -> FloatArray:
    """Particle field + Kirchhoff flow + gamma_bound times the harmonic field."""
    return (
        velocity_from_particles(cmap, particles, x, blob, threads)
        + kirchhoff_velocity(cmap, motion, x)
        + gamma_bound * harmonic_circulation_field(cmap, x)
    )
