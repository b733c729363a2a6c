"""Immutable state containers shared by the rigid-body and dynamics modules."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .conformal import BodyShape, BoundaryNodes, ConformalMap, build_map
from .fieldkernels import VortexParticle


def _frozen(a, dtype=float, shape=None):
    out = np.array(a, dtype=dtype)
    if shape is not None:
        out = out.reshape(shape)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class BodyModel:
    """Shape, its conformal map and cached boundary data; fixed in the body frame."""

    shape: BodyShape
    cmap: ConformalMap

    @classmethod
    def from_shape(cls, shape: BodyShape, order: int = 8) -> "BodyModel":
        return cls(shape, build_map(shape, order))

    def nodes(self, n: int) -> BoundaryNodes:
        return self.cmap.memo(f"nodes{n}", lambda: BoundaryNodes.build(self.cmap, n))

    @property
    def added_mass(self) -> np.ndarray:
        from .rigidbody import added_mass

        return self.cmap.memo("added_mass", lambda: added_mass(self.cmap, self.shape))


@dataclass(frozen=True)
class BodyState:
    """Lab-frame rigid body state.  ``m`` or ``J`` equal to inf pins that motion."""

    h: tuple[float, float] = (0.0, 0.0)
    hdot: tuple[float, float] = (0.0, 0.0)
    theta: float = 0.0
    r: float = 0.0
    m: float = 1.0
    J: float = 1.0

    def __post_init__(self):
        for name in ("h", "hdot"):
            v = tuple(float(c) for c in getattr(self, name))
            if len(v) != 2 or not all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite 2-vector")
            object.__setattr__(self, name, v)
        if not (np.isfinite(self.theta) and np.isfinite(self.r)):
            raise ValueError("theta and r must be finite")
        if not (self.m > 0 and self.J > 0):
            raise ValueError("m and J must be positive")

    @property
    def h_c(self) -> complex:
        return complex(*self.h)

    @property
    def hdot_c(self) -> complex:
        return complex(*self.hdot)

    @property
    def ell_body(self) -> complex:
        """Translational velocity in body axes, Q^T h'."""
        return self.hdot_c * np.exp(-1j * self.theta)

    @property
    def fixed_translation(self) -> bool:
        return bool(np.isinf(self.m))

    @property
    def fixed_rotation(self) -> bool:
        return bool(np.isinf(self.J))


@dataclass(frozen=True, eq=False)
class FlowState:
    """Body + vortex particles (body-frame positions) + bound circulation."""

    model: BodyModel
    body: BodyState
    pos: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gamma_bound: float = 0.0
    time: float = 0.0
    delta: np.ndarray | None = None

    def __post_init__(self):
        pos = _frozen(self.pos, shape=(-1, 2))
        gam = _frozen(self.gamma).ravel()
        if len(gam) != len(pos):
            raise ValueError("one circulation per particle required")
        if not (np.isfinite(pos).all() and np.isfinite(gam).all() and np.isfinite(self.gamma_bound)):
            raise ValueError("particle data must be finite")
        d = np.zeros(len(pos)) if self.delta is None else np.broadcast_to(self.delta, (len(pos),))
        if np.any(np.asarray(d) < 0):
            raise ValueError("blob radii must be >= 0")
        object.__setattr__(self, "pos", pos)
        object.__setattr__(self, "gamma", gam)
        object.__setattr__(self, "delta", _frozen(d))
        object.__setattr__(self, "gamma_bound", float(self.gamma_bound))
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def build(
        cls,
        model: BodyModel,
        body: BodyState,
        particles: Sequence[VortexParticle] = (),
        gamma_bound: float = 0.0,
        delta: float | Sequence[float] = 0.0,
        time: float = 0.0,
    ) -> "FlowState":
        pos = np.array([p.pos for p in particles], dtype=float).reshape(-1, 2)
        gam = np.array([p.gamma for p in particles], dtype=float)
        return cls(model, body, pos, gam, gamma_bound, time, np.broadcast_to(np.asarray(delta, float), (len(gam),)))

    @property
    def cmap(self) -> ConformalMap:
        return self.model.cmap

    @property
    def pos_c(self) -> np.ndarray:
        return self.pos[:, 0] + 1j * self.pos[:, 1]

    @property
    def particles(self) -> list[VortexParticle]:
        return [VortexParticle(tuple(p), g) for p, g in zip(self.pos, self.gamma)]

    @property
    def lab_positions(self) -> np.ndarray:
        """Complex lab-frame positions x = Q y + h."""
        return self.pos_c * np.exp(1j * self.body.theta) + self.body.h_c

    @property
    def circulation_total(self) -> float:
        # fixed summation order: bound first, then particles in index order
        total = self.gamma_bound
        for g in self.gamma:
            total += float(g)
        return total

    def with_(self, **kw) -> "FlowState":
        return replace(self, **kw)
