"""Boundary corrector: a divergence-free field with the body's normal trace.

With d = x - h, the rigid velocity v = h' + r d_perp has stream function
U = -h'_perp . d + r |d|^2 / 2, and

    Lambda = (d2 phi U + (1 - phi) v1, -d1 phi U + (1 - phi) v2)

where phi(|d|) is a radial cutoff, 0 near the body and 1 far away.
Lambda equals v next to the body and vanishes beyond the outer radius.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from .conformal import as_complex, as_points
from .fieldkernels import total_conj_velocity_c
from .state import BodyState, FlowState

INNER_FACTOR = 1.1
OUTER_FACTOR = 2.2


@dataclass(frozen=True)
class CorrectorCutoff:
    inner: float
    outer: float

    def __post_init__(self):
        if not (0 < self.inner < self.outer and np.isfinite(self.outer)):
            raise ValueError("need 0 < inner < outer")

    @classmethod
    def for_body(cls, circumradius: float) -> "CorrectorCutoff":
        return cls(INNER_FACTOR * circumradius, OUTER_FACTOR * circumradius)

    def profile(self, rho: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
        """phi(rho) and phi'(rho); degree-5 smoothstep, C2 at both ends."""
        rho = np.asarray(rho, dtype=float)
        w = self.outer - self.inner
        s = np.clip((rho - self.inner) / w, 0.0, 1.0)
        phi = s**3 * (10.0 - 15.0 * s + 6.0 * s**2)
        dphi = 30.0 * s**2 * (1.0 - s) ** 2 / w
        return phi, dphi


def corrector_lambda(body: BodyState, cutoff: CorrectorCutoff, x: ArrayLike) -> np.ndarray:
    """Lambda at lab points x, shape (..., 2)."""
    d = as_complex(x) - body.h_c
    hd = body.hdot_c
    r = body.r
    v = hd + 1j * r * d
    # -h'_perp . d with h'_perp = i h'
    U = -np.real(np.conj(1j * hd) * d) + 0.5 * r * np.abs(d) ** 2
    rho = np.abs(d)
    phi, dphi = cutoff.profile(rho)
    unit = np.divide(d, rho, out=np.zeros_like(d), where=rho > 0)
    grad = dphi * unit
    lam = (grad.imag * U + (1.0 - phi) * v.real) + 1j * (-grad.real * U + (1.0 - phi) * v.imag)
    return as_points(lam)


def tangent_residual(state: FlowState, cutoff: CorrectorCutoff | None = None, samples: int = 512) -> float:
    """max over boundary samples of |(u - Lambda) . n|, lab frame."""
    cmap = state.cmap
    b = state.body
    cutoff = cutoff or CorrectorCutoff.for_body(state.model.shape.circumradius)
    zeta = np.exp(2j * np.pi * np.arange(samples) / samples)
    zb = cmap.inverse_c(zeta)
    n_body = zeta * cmap.dinverse_c(zeta)
    n_body = n_body / np.abs(n_body)
    w = total_conj_velocity_c(
        cmap, state.pos_c, state.gamma, b.ell_body, b.r, state.gamma_bound, zb, np.asarray(state.delta)
    )
    rot = np.exp(1j * b.theta)
    u_lab = np.conj(w) * rot
    n_lab = n_body * rot
    x_lab = zb * rot + b.h_c
    lam = as_complex(corrector_lambda(b, cutoff, as_points(x_lab)))
    return float(np.max(np.abs(np.real((u_lab - lam) * np.conj(n_lab)))))
