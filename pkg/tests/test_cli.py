import csv
import json
from pathlib import Path

import pytest

from csck_lab.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, dump_report, main, run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _report(out):
    return json.loads((out / "report.json").read_text())


def test_polytope_check_simplex(tmp_path):
    assert run("polytope-check", str(CONFIGS / "polytope_check.toml"), out_dir=tmp_path) == EXIT_OK
    rep = _report(tmp_path)
    assert rep["result"]["A"] == "6" and rep["schema_version"] == 1 and rep["error"] is None
    assert (tmp_path / "log.txt").exists()
    rows = list(csv.reader((tmp_path / "facets.csv").open()))
    assert rows[0] == ["normal", "offset", "mass"] and len(rows) == 4


def test_stability_scan_sorted(tmp_path):
    assert run("stability-scan", str(CONFIGS / "stability_scan.toml"), out_dir=tmp_path) == EXIT_OK
    rows = list(csv.reader((tmp_path / "scan.csv").open()))
    values = [float(r[2]) for r in rows[1:]]
    assert values == sorted(values) and len(values) > 0


def test_coarse_continuity_diverges(tmp_path):
    status = run("continuity", str(CONFIGS / "continuity_coarse.toml"), out_dir=tmp_path)
    assert status == EXIT_NUMERICAL
    err = _report(tmp_path)["error"]
    assert err.startswith("NewtonDiverged(continuity_path.continuity) at t=")


def test_validation_failures(tmp_path):
    assert run("polytope-check", str(tmp_path / "missing.toml"), out_dir=tmp_path / "a") == EXIT_VALIDATION
    bad = tmp_path / "bad.toml"
    bad.write_text('polytope = "dodecagon"\n')
    assert run("polytope-check", str(bad), out_dir=tmp_path / "b") == EXIT_VALIDATION
    assert "SchemaError" in _report(tmp_path / "b")["error"]
    bad.write_text("polytope = \n")
    assert run("energy", str(bad), out_dir=tmp_path / "c") == EXIT_VALIDATION
    assert run("epsgeo", None, out_dir=tmp_path / "d") == EXIT_OK
    bad.write_text("phi0 = [[1, 0, 3.0, 0.0]]\n")
    assert run("epsgeo", str(bad), out_dir=tmp_path / "e") == EXIT_VALIDATION
    assert "InadmissibleEndpoint(mabuchi_appendix.epsgeo)" in _report(tmp_path / "e")["error"]


def test_commands_run(tmp_path):
    for name, cmd in (("energy", "energy"), ("ray_classify", "ray-classify"), ("epsgeo", "epsgeo")):
        assert run(cmd, str(CONFIGS / f"{name}.toml"), out_dir=tmp_path / name) == EXIT_OK
    rep = _report(tmp_path / "ray_classify")["result"]
    assert rep["verdicts"] == ["strictly_stable", "borderline_holomorphic"]


def test_determinism_and_env(tmp_path, monkeypatch):
    cfg = tmp_path / "suite.toml"
    cfg.write_text("quadruples = 30\nray_pairs = 10\ntransplants = 2\n")
    run("dp-suite", str(cfg), seed=5, out_dir=tmp_path / "a")
    run("dp-suite", str(cfg), seed=5, out_dir=tmp_path / "b")
    run("dp-suite", str(cfg), seed=6, out_dir=tmp_path / "c")
    a, b, c = ((tmp_path / d / "report.json").read_bytes() for d in "abc")
    assert a == b and a != c
    assert (tmp_path / "a" / "ray_pairs.csv").read_bytes() == (tmp_path / "b" / "ray_pairs.csv").read_bytes()
    monkeypatch.setenv("CSCK_LAB_OUT", str(tmp_path / "env"))
    assert main(["polytope-check", "--quiet", "--seed", "1"]) == EXIT_OK
    assert _report(tmp_path / "env" / "polytope-check")["seed"] == 1


def test_report_float_format():
    text = dump_report({"x": 0.1, "y": float("inf"), "z": 1 / 3})
    assert '"x": 0.1' in text and '"y": "inf"' in text and repr(1 / 3) in text


def test_bad_command():
    with pytest.raises(SystemExit):
        main(["nope"])
