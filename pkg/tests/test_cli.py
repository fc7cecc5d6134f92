import json
import subprocess
import sys

import pytest

from hypercoord import vocab
from hypercoord.cli import main


def test_run_prints_summary(capsys, tmp_path):
    out = tmp_path / "trace.json"
    assert main(["run", "startup", "--deterministic", "--trace", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["delivered_flow"] == 12.0 and summary["safety_violations"] == 0
    trace = json.loads(out.read_text())
    assert trace["summary"] == summary


def test_run_from_file(capsys, tmp_path):
    script = tmp_path / "s.json"
    script.write_text(json.dumps({"duration": 15, "events": [
        {"at_step": 3, "kind": "goal", "args": {"agent": "agent-c2"}}]}))
    assert main(["run", str(script), "--deterministic"]) == 0
    assert json.loads(capsys.readouterr().out)["chillers_running"] == ["chlr-2"]


def test_malformed_script_exits_2(capsys, tmp_path):
    script = tmp_path / "bad.json"
    script.write_text('{"duration": -1}')
    assert main(["run", str(script)]) == 2
    assert "duration" in capsys.readouterr().err


def test_query(capsys, tmp_path):
    q = tmp_path / "q.json"
    q.write_text(json.dumps({"select": ["c"],
                             "where": [["?c", "elem:influencedBy", ":pump-1"]]}))
    assert main(["query", str(q)]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert sorted(r["c"] for r in rows) == [vocab.P[f"chlr-{i}"].value for i in (1, 2, 3)]


def test_validate_and_export(capsys, tmp_path):
    path = tmp_path / "fixture.ttl"
    assert main(["export-fixture", "-o", str(path)]) == 0
    assert path.read_text() == vocab.asset_text("fixture.ttl")
    assert main(["validate", str(path)]) == 0
    assert "0 violation(s)" in capsys.readouterr().out
    broken = tmp_path / "broken.ttl"
    broken.write_text(path.read_text().replace(":chlr-1, :vlv-1", ":chlr-1"))
    assert main(["validate", str(broken)]) == 1
    assert "UnmanagedComponent" in capsys.readouterr().out


def test_entry_point_is_installed():
    done = subprocess.run([sys.executable, "-m", "hypercoord.cli", "--help"],
                          capture_output=True, text=True)
    assert done.returncode == 0 and "export-fixture" in done.stdout
