"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 model breakdown during a run
(partial outputs are kept), 3 failed validation.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path


from .diagnostics import DiagnosticsMonitor, DiagnosticsRecord, zeta_velocity_field
from .dynamics import IntegratorConfig, run
from .errors import ExEulerError, ParticleTooClose
from .oracle import (
    AnnularGrid,
    GridField,
    Report,
    default_family,
    measure_poisson_constants,
    poisson_ratios,
    reports_from_constants,
)
from .scenario import SHIPPED, Scenario, ScenarioError, load_shipped
from .state import FlowState
from .validation import SUITES, bkm_sweep, run_suite

EXIT_OK, EXIT_INPUT, EXIT_BREAKDOWN, EXIT_FAILED = 0, 1, 2, 3


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is reserved for breakdown
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _threads(arg: int | None) -> int | None:
    if arg is not None:
        if arg < 1:
            raise InputError("--threads must be >= 1")
        return arg
    env = os.environ.get("EXEULER_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise InputError(f"EXEULER_THREADS={env!r} is not an integer") from None
        if n < 1:
            raise InputError("EXEULER_THREADS must be >= 1")
        return n
    return None


def _load_scenario(arg: str) -> Scenario:
    p = Path(arg)
    if not p.exists() and arg in SHIPPED:
        return load_shipped(arg)
    return Scenario.load(p)


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------


class RunWriter:
    """Single writer for every output stream of a run."""

    def __init__(self, out: Path, monitor: DiagnosticsMonitor, grid: AnnularGrid, fields: bool):
        self.out = out
        self.monitor = monitor
        self.grid = grid
        self.fields = fields
        self._nd = open(out / "diagnostics.ndjson", "w", newline="\n")
        self._csv_f = open(out / "diagnostics.csv", "w", newline="")
        self._p_f = open(out / "particles.csv", "w", newline="")
        self._b_f = open(out / "body.csv", "w", newline="")
        self._csv = csv.writer(self._csv_f, lineterminator="\n")
        self._p = csv.writer(self._p_f, lineterminator="\n")
        self._b = csv.writer(self._b_f, lineterminator="\n")
        self._csv.writerow(list(DiagnosticsRecord.CSV_FIELDS))
        self._p.writerow(["t", "id", "x", "y", "gamma"])
        self._b.writerow(["t", "h_x", "h_y", "hdot_x", "hdot_y", "theta", "r"])
        if fields:
            (out / "fields").mkdir(exist_ok=True)

    def __call__(self, k: int, state: FlowState) -> None:
        rec = self.monitor(k, state)
        t = repr(float(state.time))
        self._nd.write(rec.to_json() + "\n")
        self._csv.writerow(rec.csv_row())
        for j, (x, g) in enumerate(zip(state.lab_positions, state.gamma)):
            self._p.writerow([t, j, repr(float(x.real)), repr(float(x.imag)), repr(float(g))])
        b = state.body
        self._b.writerow([t, *(repr(float(v)) for v in (*b.h, *b.hdot, b.theta, b.r))])
        if self.fields:
            self._dump_fields(k, state)
        for f in (self._nd, self._csv_f, self._p_f, self._b_f):
            f.flush()

    def _dump_fields(self, k: int, state: FlowState) -> None:
        u = zeta_velocity_field(state, self.grid)
        stem = self.out / "fields" / f"step_{k:08d}"
        u.astype("<f8").tofile(stem.with_suffix(".bin"))
        meta = {
            "grid": self.grid.to_dict(),
            "fields": ["u_zeta", "v_zeta"],
            "shape": list(u.shape),
            "time": float(state.time),
            "endianness": "little",
            "dtype": "f64",
        }
        stem.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True) + "\n")

    def close(self) -> None:
        for f in (self._nd, self._csv_f, self._p_f, self._b_f):
            f.close()


def cmd_run(args) -> int:
    try:
        sc = _load_scenario(args.scenario)
        over = {}
        if args.dt is not None:
            over["dt"] = args.dt
        if args.T is not None:
            over["T"] = args.T
        if args.dump_every is not None:
            over["dump_every"] = args.dump_every
        if over:
            sc = Scenario.from_dict({**sc.to_dict(), **over})
        threads = _threads(args.threads)
        config = IntegratorConfig(sc.dt, threads=threads)
        state = sc.initial_state()
    except (ScenarioError, InputError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = Path(args.out)
    if out.exists() and not out.is_dir():
        print(f"input error: {out} is not a directory", file=sys.stderr)
        return EXIT_INPUT
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"input error: cannot create {out}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    monitor = DiagnosticsMonitor(state, sc.grid)
    writer = RunWriter(out, monitor, sc.grid, args.fields)
    try:
        run(state, config, sc.T, [writer], dump_every=sc.dump_every)
    except ParticleTooClose as exc:
        print(f"model breakdown: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    except ExEulerError as exc:
        print(f"numerical breakdown: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    finally:
        writer.close()
    return EXIT_OK


# --------------------------------------------------------------------------
# validate / measure
# --------------------------------------------------------------------------


def cmd_validate(args) -> int:
    checks, secs = run_suite(args.suite)
    print(f"suite {args.suite} ({secs:.1f} s)")
    for c in checks:
        print(c.row())
    ok = all(c.passed for c in checks)
    print("ALL PASS" if ok else "FAILED")
    return EXIT_OK if ok else EXIT_FAILED


def _measure_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"bad config: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")
    return cfg


def measure_reports(estimate_id: str, cfg: dict) -> list[Report]:
    g = cfg.get("grid", {})
    grid = AnnularGrid(float(g.get("R_outer", 6.0)), int(g.get("n_r", 128)), int(g.get("n_t", 256)))
    if estimate_id == "bkm":
        amps = [float(a) for a in cfg.get("amplitudes", [1.0, 10.0, 100.0])]
        center = float(cfg.get("center", 2.0))
        radius = float(cfg.get("radius", 0.6))
        rows = bkm_sweep(grid, amps, center, radius)
        out = [Report("bkm", {"grid": grid.to_dict(), "center": center, "radius": radius, **r}, r["ratio"]) for r in rows]
        ratios = [r["ratio"] for r in rows]
        out.append(Report("bkm", {"grid": grid.to_dict(), "row": "spread"}, max(ratios) / min(ratios)))
        return out
    radii = [float(r) for r in cfg.get("radii", [2.0, 3.0])]
    factor = float(cfg.get("amplitude_factor", 10.0))
    fam = default_family(grid, radii)
    res = measure_poisson_constants(grid, fam)
    out = [r for r in reports_from_constants(res) if r.estimate_id == estimate_id]
    delta = 0.0
    for om in fam:
        a = poisson_ratios(grid, om)[estimate_id]
        b = poisson_ratios(grid, GridField(factor * om.values, grid))[estimate_id]
        delta = max(delta, abs(a - b))
    out.append(Report(estimate_id, {"grid": grid.to_dict(), "row": "amplitude_invariance", "factor": factor}, delta))
    out.append(Report(estimate_id, {"grid": grid.to_dict(), "row": "max"}, res[f"{estimate_id}_max"]))
    return out


def cmd_measure(args) -> int:
    try:
        cfg = _measure_config(args.config)
        reports = measure_reports(args.estimate_id, cfg)
    except (InputError, ValueError, TypeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if any(not math.isfinite(r.ratio) for r in reports):
        print("non-finite ratio", file=sys.stderr)
        return EXIT_FAILED
    text = "".join(r.to_json() + "\n" for r in reports)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="exeuler", description="Rigid body in a 2D perfect fluid with vortex particles.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("--scenario", required=True, help="scenario JSON file or shipped scenario name")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--dt", type=float)
    r.add_argument("--T", type=float)
    r.add_argument("--dump-every", type=int)
    r.add_argument("--threads", type=int)
    r.add_argument("--fields", action="store_true", help="dump mapped-plane velocity grids")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="run a validation suite")
    v.add_argument("suite", choices=sorted(SUITES))
    v.set_defaults(func=cmd_validate)

    m = sub.add_parser("measure", help="measure estimate ratios")
    m.add_argument("estimate_id", choices=["poisson1", "poisson2", "bkm"])
    m.add_argument("--config", help="JSON file: grid, radii, amplitudes, ...")
    m.add_argument("--out", help="NDJSON output file (default stdout)")
    m.set_defaults(func=cmd_measure)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
