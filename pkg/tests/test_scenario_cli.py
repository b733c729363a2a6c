import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exeuler import cli
from exeuler.scenario import SHIPPED, Scenario, ScenarioError, load_shipped
from exeuler.validation import Check

finite = st.floats(-10, 10, allow_nan=False)


@st.composite
def scenarios(draw):
    shape = draw(st.sampled_from([
        {"kind": "disk", "radius": 1.0},
        {"kind": "ellipse", "semi_axes": [1.5, 1.0]},
    ]))
    vort = [
        {"pos": [draw(st.floats(2, 5)), draw(finite)], "gamma": draw(finite), "blob_delta": draw(st.floats(0, 0.5))}
        for _ in range(draw(st.integers(0, 3)))
    ]
    return {
        "name": draw(st.text(max_size=8)),
        "shape": shape,
        "m": draw(st.one_of(st.just("inf"), st.floats(0.1, 10))),
        "J": draw(st.one_of(st.just("inf"), st.floats(0.1, 10))),
        "ell0": [draw(finite), draw(finite)],
        "r0": draw(finite),
        "vortices": vort,
        "gamma_bound": draw(finite),
        "dt": draw(st.floats(1e-4, 0.1)),
        "T": draw(st.floats(0, 10)),
        "dump_every": draw(st.integers(1, 1000)),
    }


@settings(max_examples=60, deadline=None)
@given(scenarios())
def test_canonical_roundtrip(d):
    text = Scenario.from_dict(d).canonical_json()
    assert Scenario.loads(text).canonical_json() == text


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_scenarios_are_canonical(name):
    sc = load_shipped(name)
    assert Scenario.loads(sc.canonical_json()).canonical_json() == sc.canonical_json()


@pytest.mark.parametrize(
    "patch",
    [
        {"bogus": 1},
        {"m": -1.0},
        {"J": "infinity"},
        {"dt": 0.0},
        {"T": -1.0},
        {"dump_every": 0},
        {"dump_every": 1.5},
        {"map_order": -1},
        {"vortices": [{"pos": [3, 0]}]},
        {"vortices": [{"pos": [3, 0], "gamma": 1, "blob_delta": -0.1}]},
        {"shape": {"kind": "triangle"}},
        {"grid": {"R_outer": 6}},
        {"ell0": [1.0]},
        {"gamma_bound": float("nan")},
    ],
)
def test_scenario_validation(patch):
    d = {**load_shipped("quiescent").to_dict(), **patch}
    with pytest.raises(ScenarioError):
        Scenario.from_dict(d)


def test_missing_keys_and_bad_json():
    with pytest.raises(ScenarioError):
        Scenario.from_dict({"shape": {"kind": "disk", "radius": 1.0}, "m": 1.0})
    with pytest.raises(ScenarioError):
        Scenario.loads("{not json")
    with pytest.raises(ScenarioError):
        Scenario.loads("[]")


# -- run -------------------------------------------------------------------


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_run_quiescent(tmp_path):
    out = tmp_path / "q"
    assert cli.main(["run", "--scenario", "quiescent", "--out", str(out), "--T", "0.1", "--dump-every", "10"]) == 0
    body = _rows(out / "body.csv")
    assert len(body) == 11
    assert all(float(v) == 0.0 for row in body for k, v in row.items() if k != "t")
    recs = [json.loads(l) for l in (out / "diagnostics.ndjson").read_text().splitlines()]
    assert [r["step"] for r in recs] == list(range(0, 101, 10))
    assert all(r["E0_grid"] == 0.0 for r in recs)
    diag = _rows(out / "diagnostics.csv")
    assert len(diag) == len(recs)
    assert (out / "particles.csv").read_text() == "t,id,x,y,gamma\n"
    assert not (out / "fields").exists()


def test_run_fields_sidecar(tmp_path):
    sc = tmp_path / "s.json"
    d = load_shipped("free_disk_pair").to_dict()
    d.update(T=0.02, dt=0.01, dump_every=1, grid={"R_outer": 6.0, "n_r": 16, "n_t": 32})
    sc.write_text(json.dumps(d))
    out = tmp_path / "f"
    assert cli.main(["run", "--scenario", str(sc), "--out", str(out), "--fields"]) == 0
    metas = sorted((out / "fields").glob("*.json"))
    assert [m.stem for m in metas] == ["step_00000000", "step_00000001", "step_00000002"]
    meta = json.loads(metas[-1].read_text())
    assert meta["shape"] == [2, 17, 32] and meta["dtype"] == "f64" and meta["endianness"] == "little"
    assert meta["time"] == pytest.approx(0.02)
    data = np.fromfile(metas[-1].with_suffix(".bin"), dtype="<f8").reshape(meta["shape"])
    assert np.isfinite(data).all() and np.abs(data).max() > 0
    parts = _rows(out / "particles.csv")
    assert len(parts) == 6
    assert float(parts[0]["gamma"]) == 1.5


@pytest.mark.parametrize(
    "text",
    ["{broken", json.dumps({"shape": {"kind": "disk", "radius": 1.0}, "m": 1.0, "J": 1.0, "vortices": [{"pos": [0.2, 0], "gamma": 1.0}]})],
    ids=["malformed", "vortex-inside-body"],
)
def test_run_input_error_leaves_no_output(tmp_path, text, capsys):
    sc = tmp_path / "bad.json"
    sc.write_text(text)
    out = tmp_path / "never"
    assert cli.main(["run", "--scenario", str(sc), "--out", str(out)]) == 1
    assert not out.exists()
    assert "input error" in capsys.readouterr().err


def test_run_breakdown_keeps_partial_output(tmp_path, capsys):
    # a tracer fixed in space is hit by a body moving at constant speed
    d = {
        "shape": {"kind": "disk", "radius": 1.0}, "m": "inf", "J": "inf", "ell0": [5.0, 0.0],
        "vortices": [{"pos": [3.0, 0.0], "gamma": 0.0}], "dt": 0.01, "T": 2.0, "dump_every": 10,
        "grid": {"R_outer": 6.0, "n_r": 16, "n_t": 32},
    }
    sc = tmp_path / "crash.json"
    sc.write_text(json.dumps(d))
    out = tmp_path / "o"
    assert cli.main(["run", "--scenario", str(sc), "--out", str(out)]) == 2
    assert "breakdown" in capsys.readouterr().err
    recs = (out / "diagnostics.ndjson").read_text().splitlines()
    assert 1 <= len(recs) < 21
    for line in recs:
        json.loads(line)
    assert len(_rows(out / "body.csv")) == len(recs)


def test_orbit_radius_drift_column(tmp_path):
    out = tmp_path / "orbit"
    assert cli.main(["run", "--scenario", "vortex_orbit", "--out", str(out), "--T", "1", "--dump-every", "250"]) == 0
    drift = [float(r["radius_drift"]) for r in _rows(out / "diagnostics.csv")]
    assert len(drift) == 5 and max(drift) < 1e-6


def test_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("EXEULER_THREADS", "two")
    assert cli.main(["run", "--scenario", "quiescent", "--out", str(tmp_path / "a"), "--T", "0"]) == 1
    monkeypatch.setenv("EXEULER_THREADS", "0")
    assert cli.main(["run", "--scenario", "quiescent", "--out", str(tmp_path / "b"), "--T", "0"]) == 1
    monkeypatch.setenv("EXEULER_THREADS", "2")
    assert cli.main(["run", "--scenario", "quiescent", "--out", str(tmp_path / "c"), "--T", "0"]) == 0
    assert cli.main(["run", "--scenario", "quiescent", "--out", str(tmp_path / "d"), "--T", "0", "--threads", "0"]) == 1


def test_overrides_are_validated(tmp_path):
    assert cli.main(["run", "--scenario", "quiescent", "--out", str(tmp_path / "x"), "--dt", "-1"]) == 1
    assert not (tmp_path / "x").exists()


def test_out_is_a_file(tmp_path):
    f = tmp_path / "file"
    f.write_text("")
    assert cli.main(["run", "--scenario", "quiescent", "--out", str(f), "--T", "0"]) == 1


@pytest.mark.parametrize("argv", [[], ["run"], ["validate", "nope"], ["measure", "poisson3"], ["run", "--scenario", "q", "--out", "o", "--dt", "x"]])
def test_usage_errors_exit_1(argv, capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(argv)
    assert e.value.code == 1


# -- validate / measure ------------------------------------------------------


def test_validate_pass_and_fail(monkeypatch, capsys):
    monkeypatch.setitem(cli.SUITES, "conformal", lambda: [Check("ok", 0.0, 1.0)])
    assert cli.main(["validate", "conformal"]) == 0
    assert "ALL PASS" in capsys.readouterr().out
    monkeypatch.setitem(cli.SUITES, "conformal", lambda: [Check("ok", 0.0, 1.0), Check("bad", math.nan, 1.0)])
    assert cli.main(["validate", "conformal"]) == 3
    assert "FAILED" in capsys.readouterr().out


def test_validate_conformal_real(capsys):
    assert cli.main(["validate", "conformal"]) == 0


@pytest.mark.parametrize("eid", ["poisson1", "poisson2"])
def test_measure_poisson(tmp_path, eid):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid": {"R_outer": 6.0, "n_r": 32, "n_t": 64}}))
    out = tmp_path / "m.ndjson"
    assert cli.main(["measure", eid, "--config", str(cfg), "--out", str(out)]) == 0
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    assert all(r["estimate_id"] == eid and math.isfinite(r["ratio"]) and r["ratio"] >= 0 for r in rows)
    inv = [r for r in rows if r["parameters"].get("row") == "amplitude_invariance"]
    assert len(inv) == 1 and inv[0]["ratio"] < 1e-10


def test_measure_bkm_stdout(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid": {"R_outer": 6.0, "n_r": 32, "n_t": 64}, "amplitudes": [1, 10]}))
    assert cli.main(["measure", "bkm", "--config", str(cfg)]) == 0
    rows = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert len(rows) == 3 and rows[-1]["parameters"]["row"] == "spread"
    assert rows[-1]["ratio"] < 2.0


def test_measure_bad_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text("[1, 2]")
    assert cli.main(["measure", "bkm", "--config", str(cfg)]) == 1
    assert cli.main(["measure", "bkm", "--config", str(tmp_path / "missing.json")]) == 1
