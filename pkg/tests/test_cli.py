import json
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from holopnt.cli import EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, EXIT_STRICT, main

SCHEMA = json.loads(resources.files("holopnt").joinpath("schemas/report-1.json").read_text())

RECT = """waypoints = [{theta = 0.0, phi = 0.0}, {theta = 0.0, phi = 1.5707963267948966},
  {theta = 0.7853981633974483, phi = 1.5707963267948966}, {theta = 0.7853981633974483, phi = 0.0}]
close = true
"""


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def rect(tmp_path):
    p = tmp_path / "rect.toml"
    p.write_text(RECT)
    return str(p)


@pytest.mark.parametrize("argv", [
    ["validate", "--model", "lambda"],
    ["spectrum", "--model", "lambda", "--N", "2"],
    ["curvature", "--model", "tripod", "--layers", "1", "--eigenvalue", "0", "--order", "1"],
    ["pnt", "--model", "lambda", "--N", "2", "--order", "1", "--samples", "1"],
])
def test_reports_validate_against_schema(capsys, argv):
    code, out, _ = run(capsys, *argv)
    assert code == EXIT_OK
    doc = json.loads(out)
    jsonschema.validate(doc, SCHEMA)
    assert doc["command"] == argv[0]
    assert doc["manifest"]["model_digest"].startswith("sha256:")


def test_holonomy_report(capsys, rect):
    code, out, _ = run(capsys, "holonomy", "--model", "lambda", "--layers", "1", "--eigenvalue", "0",
                       "--loop", rect)
    assert code == EXIT_OK
    doc = json.loads(out)
    jsonschema.validate(doc, SCHEMA)
    assert abs(doc["result"]["area_phase"] - 0.7853981634) < 1e-9


def test_reports_are_byte_identical(capsys):
    argv = ["pnt", "--model", "lambda", "--N", "2", "--order", "1", "--samples", "2"]
    first = run(capsys, *argv)[1]
    second = run(capsys, *argv)[1]
    assert first == second


def test_out_file(capsys, tmp_path):
    target = tmp_path / "r.json"
    code, out, _ = run(capsys, "spectrum", "--model", "lambda", "--out", str(target))
    assert code == EXIT_OK and out == ""
    jsonschema.validate(json.loads(target.read_text()), SCHEMA)


def test_malformed_model_reports_location(capsys, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text('name = "x"\nsystem = {bosons = 2}\n[graph]\nedge = [{i = 1, j = 2, amp = "cos(", phase = "0"}]\n')
    code, _, err = run(capsys, "validate", "--model", str(bad))
    assert code == EXIT_INPUT
    assert "line 4" in err and "column" in err


def test_malformed_loop_reports_location(capsys, tmp_path):
    bad = tmp_path / "loop.toml"
    bad.write_text("waypoints = [\n  {theta = 0.1, phi = },\n]\n")
    code, _, err = run(capsys, "holonomy", "--model", "lambda", "--layers", "1", "--eigenvalue", "0",
                       "--loop", str(bad))
    assert code == EXIT_INPUT
    assert "line 2" in err


def test_unknown_model(capsys):
    code, _, err = run(capsys, "spectrum", "--model", "nope")
    assert code == EXIT_INPUT
    assert "input error" in err


def test_numerical_failure_exit(capsys, tmp_path):
    loop = tmp_path / "cross.toml"
    loop.write_text("waypoints = [{omega_a = 1.0, kappa = 0.0}, {omega_a = 1.4, kappa = 0.0},\n"
                    "  {omega_a = 1.4, kappa = 0.3}, {omega_a = 1.0, kappa = 0.3}]\nclose = true\n")
    code, _, err = run(capsys, "holonomy", "--model", "jaynes_cummings", "--layers", "1", "--label", "0",
                       "--loop", str(loop), "--method", "projector")
    assert code == EXIT_NUMERIC
    assert "gap closed" in err


def test_strict_mode(capsys):
    # Gaussian scans flag eigenspaces that reach beyond N_max
    argv = ["pnt", "--model", "kerr2", "--N", "2", "--order", "0", "--samples", "0"]
    code, out, _ = run(capsys, *argv)
    assert code == EXIT_OK
    assert json.loads(out)["warnings"]
    code, _, err = run(capsys, *argv, "--strict")
    assert code == EXIT_STRICT
    assert "reliability" in err


def test_text_and_table_formats(capsys):
    code, out, _ = run(capsys, "pnt", "--model", "lambda", "--N", "2", "--order", "1", "--samples", "0",
                       "--format", "table")
    assert code == EXIT_OK
    assert out.splitlines()[0].startswith("l,")
    code, out, _ = run(capsys, "validate", "--model", "lambda", "--format", "text")
    assert "valid" in out


def test_console_script_entry():
    r = subprocess.run([sys.executable, "-m", "holopnt", "--version"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "0.1.0" in r.stdout
