import json
import subprocess
import sys

import pytest

from locindex.cli import EXIT_FAIL, EXIT_OK, EXIT_SCHEMA, main
from locindex.errors import ScenarioSchemaError
from locindex.scenario import (
    KINDS,
    OUTPUT_ENV,
    Scenario,
    list_builtins,
    load,
    run_scenario,
    validate,
)


def _write(tmp_path, data, name="sc.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_list_builtins(capsys):
    entries = list_builtins()
    assert len(entries) >= 5
    assert {e["kind"] for e in entries} == set(KINDS)
    assert main(["list", "--json"]) == EXIT_OK
    listed = json.loads(capsys.readouterr().out)
    assert [e["name"] for e in listed] == [e["name"] for e in entries]


@pytest.mark.parametrize("entry", list_builtins(), ids=lambda e: e["name"])
def test_builtins_validate(entry):
    data = load(entry["name"])
    assert validate(data) == []
    sc = Scenario.from_dict(data)
    assert Scenario.from_dict(sc.to_dict()) == sc


def test_bad_truncation_pointer(tmp_path, capsys):
    data = load("wodzicki-basic")
    data["truncation"] = -1
    diags = validate(data)
    assert [p for p, _ in diags] == ["/truncation"]
    with pytest.raises(ScenarioSchemaError) as info:
        Scenario.from_dict(data)
    assert info.value.pointer == "/truncation"
    assert main(["validate", _write(tmp_path, data)]) == EXIT_SCHEMA
    assert capsys.readouterr().out.startswith("/truncation:")


def test_payload_pointer(tmp_path):
    data = load("toeplitz-winding")
    data["payload"]["symbols"] = [{"winding": "two"}]
    pointers = [p for p, _ in validate(data)]
    assert pointers and all(p.startswith("/payload/symbols/0") for p in pointers)


def test_malformed_file_exits_with_schema_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["validate", str(path)]) == EXIT_SCHEMA
    assert main(["run", str(path)]) == EXIT_SCHEMA
    assert main(["run", str(tmp_path / "missing.json")]) == EXIT_SCHEMA
    assert main(["run", _write(tmp_path, {"name": "x"}, "partial.json")]) == EXIT_SCHEMA


def test_unknown_kind(tmp_path):
    data = load("wodzicki-basic")
    data["kind"] = "nonsense"
    assert validate(data)
    assert main(["run", _write(tmp_path, data)]) == EXIT_SCHEMA


def test_wodzicki_basic_report(tmp_path):
    out = tmp_path / "rep.json"
    assert main(["run", "wodzicki-basic", "--out", str(out)]) == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["passed"] and rep["scenario"]["name"] == "wodzicki-basic"
    assert "timings" not in rep
    for value in rep["quantities"]["canonical_residue"].values():
        assert abs(value[0] - 2.0) < 1e-4 and abs(value[1]) < 1e-10
    assert rep["conventions"]


def test_reports_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["run", "trace-formulas", "--out", str(a)]) == EXIT_OK
    assert main(["run", "trace-formulas", "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_timings_flag(tmp_path):
    out = tmp_path / "t.json"
    assert main(["run", "parabolic-fixed-point", "--timings", "--out", str(out)]) == EXIT_OK
    assert "timings" in json.loads(out.read_text())


def test_output_dir_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "reports"))
    assert main(["run", "toeplitz-winding", "parabolic-fixed-point"]) == EXIT_OK
    assert capsys.readouterr().out == ""
    names = sorted(p.name for p in (tmp_path / "reports").iterdir())
    assert names == ["parabolic-fixed-point.json", "toeplitz-winding.json"]


def test_stdout_and_csv(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    assert main(["run", "toeplitz-winding", "--csv", str(tmp_path / "csv")]) == EXIT_OK
    captured = capsys.readouterr()
    assert json.loads(captured.out)["passed"]
    assert "PASS toeplitz-winding" in captured.err
    files = sorted(p.name for p in (tmp_path / "csv").iterdir())
    assert "toeplitz-winding.checks.csv" in files and len(files) >= 2


def test_failing_check_exits_one(tmp_path):
    data = load("wodzicki-basic")
    data["name"] = "too-strict"
    data["tolerances"] = {"canonical": 1e-14}
    assert main(["run", _write(tmp_path, data), "--out", str(tmp_path / "r.json")]) == EXIT_FAIL


def test_truncation_override():
    rep = run_scenario("toeplitz-winding", {"truncation": 64})
    assert rep.scenario.truncation == 64 and rep.passed
    assert rep.criteria() == {}


def test_out_requires_single_scenario(tmp_path):
    assert main(["run", "toeplitz-winding", "parabolic-fixed-point", "--out", str(tmp_path / "x.json")]) == EXIT_SCHEMA


def test_parallel_jobs_match_serial(tmp_path, monkeypatch):
    for jobs, sub in ((1, "serial"), (2, "parallel")):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / sub))
        assert main(["run", "toeplitz-winding", "parabolic-fixed-point", "--jobs", str(jobs)]) == EXIT_OK
    for name in ("toeplitz-winding.json", "parabolic-fixed-point.json"):
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "parallel" / name).read_bytes()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "locindex", "validate", "toeplitz-winding"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "ok"
    proc = subprocess.run([sys.executable, "-m", "locindex", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 2
