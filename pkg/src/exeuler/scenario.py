"""Scenario files: JSON description of a body, its initial motion and the vortices.

See docs/scenario.md for the schema.  Infinite mass or inertia (the string
"inf") pins the corresponding motion.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path
from typing import Any

from .conformal import BodyShape
from .fieldkernels import VortexParticle
from .oracle import AnnularGrid
from .state import BodyModel, BodyState, FlowState

SHIPPED = ("quiescent", "vortex_orbit", "free_disk_pair", "ellipse_vortex")


class ScenarioError(ValueError):
    pass


def _num(v: Any, name: str, allow_inf: bool = False) -> float:
    if allow_inf and v == "inf":
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{name} must be a number")
    x = float(v)
    if not math.isfinite(x):
        raise ScenarioError(f"{name} must be finite")
    return x


def _vec(v: Any, name: str) -> tuple[float, float]:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ScenarioError(f"{name} must be a 2-element list")
    return (_num(v[0], name), _num(v[1], name))


def _enc(x: float) -> Any:
    return "inf" if math.isinf(x) else x


@dataclass(frozen=True)
class Vortex:
    pos: tuple[float, float]
    gamma: float
    blob_delta: float = 0.0


@dataclass(frozen=True)
class Scenario:
    shape: BodyShape
    m: float
    J: float
    ell0: tuple[float, float] = (0.0, 0.0)
    r0: float = 0.0
    vortices: tuple[Vortex, ...] = ()
    gamma_bound: float = 0.0
    dt: float = 1e-3
    T: float = 1.0
    dump_every: int = 100
    grid: AnnularGrid = field(default_factory=lambda: AnnularGrid(6.0, 128, 256))
    map_order: int = 8
    name: str = "scenario"

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Scenario":
        if not isinstance(d, dict):
            raise ScenarioError("scenario must be a JSON object")
        known = {"name", "shape", "map_order", "m", "J", "ell0", "r0", "vortices", "gamma_bound", "dt", "T", "dump_every", "grid"}
        extra = set(d) - known
        if extra:
            raise ScenarioError(f"unknown scenario keys: {sorted(extra)}")
        for key in ("shape", "m", "J"):
            if key not in d:
                raise ScenarioError(f"missing key {key!r}")
        try:
            shape = BodyShape.from_dict(d["shape"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"bad shape: {exc}") from exc
        m = _num(d["m"], "m", allow_inf=True)
        J = _num(d["J"], "J", allow_inf=True)
        if m <= 0 or J <= 0:
            raise ScenarioError("m and J must be positive")
        vort = []
        for i, v in enumerate(d.get("vortices", [])):
            if not isinstance(v, dict) or "pos" not in v or "gamma" not in v:
                raise ScenarioError(f"vortex {i} needs pos and gamma")
            bd = _num(v.get("blob_delta", 0.0), f"vortices[{i}].blob_delta")
            if bd < 0:
                raise ScenarioError("blob_delta must be >= 0")
            vort.append(Vortex(_vec(v["pos"], f"vortices[{i}].pos"), _num(v["gamma"], f"vortices[{i}].gamma"), bd))
        dt = _num(d.get("dt", 1e-3), "dt")
        T = _num(d.get("T", 1.0), "T")
        if dt <= 0 or T < 0:
            raise ScenarioError("dt must be > 0 and T >= 0")
        de = d.get("dump_every", 100)
        if isinstance(de, bool) or not isinstance(de, int) or de < 1:
            raise ScenarioError("dump_every must be a positive integer")
        mo = d.get("map_order", 8)
        if isinstance(mo, bool) or not isinstance(mo, int) or mo < 0:
            raise ScenarioError("map_order must be a non-negative integer")
        g = d.get("grid", {"R_outer": 6.0, "n_r": 128, "n_t": 256})
        try:
            grid = AnnularGrid(float(g["R_outer"]), int(g["n_r"]), int(g["n_t"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"bad grid: {exc}") from exc
        name = d.get("name", "scenario")
        if not isinstance(name, str):
            raise ScenarioError("name must be a string")
        return cls(
            shape, m, J, _vec(d.get("ell0", [0.0, 0.0]), "ell0"), _num(d.get("r0", 0.0), "r0"),
            tuple(vort), _num(d.get("gamma_bound", 0.0), "gamma_bound"), dt, T, de, grid, mo, name,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "shape": self.shape.to_dict(),
            "map_order": self.map_order,
            "m": _enc(self.m),
            "J": _enc(self.J),
            "ell0": list(self.ell0),
            "r0": self.r0,
            "vortices": [{"pos": list(v.pos), "gamma": v.gamma, "blob_delta": v.blob_delta} for v in self.vortices],
            "gamma_bound": self.gamma_bound,
            "dt": self.dt,
            "T": self.T,
            "dump_every": self.dump_every,
            "grid": self.grid.to_dict(),
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Scenario":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"malformed JSON: {exc}") from exc
        return cls.from_dict(d)

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario: {exc}") from exc
        return cls.loads(text)

    def initial_state(self, model: BodyModel | None = None) -> FlowState:
        """Flow state at t = 0: h = 0, theta = 0, h' = ell0, r = r0."""
        model = model or BodyModel.from_shape(self.shape, self.map_order)
        body = BodyState((0.0, 0.0), self.ell0, 0.0, self.r0, self.m, self.J)
        parts = [VortexParticle(v.pos, v.gamma) for v in self.vortices]
        if parts:
            # raises InsideBody for a vortex placed inside the body
            model.cmap.forward_c([complex(*v.pos) for v in self.vortices])
        return FlowState.build(model, body, parts, self.gamma_bound, [v.blob_delta for v in self.vortices])


def shipped_path(name: str):
    return files("exeuler").joinpath("scenarios", f"{name}.json")


def load_shipped(name: str) -> Scenario:
    if name not in SHIPPED:
        raise ScenarioError(f"unknown shipped scenario {name!r}")
    return Scenario.loads(shipped_path(name).read_text())
