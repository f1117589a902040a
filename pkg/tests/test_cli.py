import json
import subprocess
import sys

import pytest

from qdfo import __version__
from qdfo.cli import main

BROKEN = """define void @main() #0 {
entry:
  %x = add i64 1, 2
}
attributes #0 = { "EntryPoint" }
"""


@pytest.fixture()
def toffoli(tmp_path):
    path = tmp_path / "toffoli.ll"
    assert main(["gen", "toffoli", "-o", str(path)]) == 0
    return path


def test_gen_and_stats(toffoli, capsys):
    assert main(["stats", str(toffoli), "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert (doc["loadOps"], doc["createOps"], doc["instructions"]) == (21, 6, 137)
    assert main(["stats", str(toffoli)]) == 0
    assert "loadOps: 21" in capsys.readouterr().out


def test_opt_with_report(toffoli, tmp_path, capsys):
    out, rep = tmp_path / "out.ll", tmp_path / "report.json"
    assert main(["opt", str(toffoli), "-o", str(out), "--stats", "--verify", "--report", str(rep)]) == 0
    table = capsys.readouterr().out
    assert "loadOps" in table and "68.6%" in table
    doc = json.loads(rep.read_text())
    assert doc["verified"] and doc["iterations"] == 2 and doc["input"] == "toffoli.ll"
    assert (doc["after"]["loadOps"], doc["after"]["createOps"]) == (3, 2)
    assert main(["validate", str(out)]) == 0
    assert main(["verify", str(toffoli), str(out)]) == 0
    assert capsys.readouterr().out.endswith("traces equal\n")


def test_opt_json_to_stdout(toffoli, tmp_path, capsys):
    assert main(["opt", str(toffoli), "-o", str(tmp_path / "o.ll"), "--format", "json",
                 "--passes", "qdfo-load"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["rewrites"]["qdfo-create"] == 0 and doc["after"]["createOps"] == 6


def test_verify_mismatch(tmp_path, capsys):
    a, b = tmp_path / "a.ll", tmp_path / "b.ll"
    main(["gen", "scaling_20", "-o", str(a)])
    main(["gen", "scaling_20", "--seed", "99", "-o", str(b)])
    capsys.readouterr()
    assert main(["verify", str(a), str(b)]) == 4
    assert "diverge at event" in capsys.readouterr().out


def test_parse_error_location(tmp_path, capsys):
    path = tmp_path / "bad.ll"
    path.write_text("define void @main() {\nentry:\n  %x = frobnicate i64 1\n  ret void\n}\n")
    assert main(["validate", str(path)]) == 1
    err = capsys.readouterr().err
    assert err.startswith(f"{path}:3:")


def test_missing_file(tmp_path, capsys):
    assert main(["stats", str(tmp_path / "nope.ll")]) == 1


def test_invalid_module(tmp_path, capsys):
    path = tmp_path / "broken.ll"
    path.write_text(BROKEN)
    assert main(["validate", str(path)]) == 2
    assert "validation problem" in capsys.readouterr().err
    assert main(["opt", str(path), "-o", str(tmp_path / "o.ll")]) == 2


def test_unknown_pass(toffoli, tmp_path, capsys):
    assert main(["opt", str(toffoli), "-o", str(tmp_path / "o.ll"), "--passes", "qdfo-loads"]) == 1
    assert "unknown pass" in capsys.readouterr().err


def test_sweep_json(capsys):
    assert main(["sweep", "18", "--format", "json", "--jobs", "1"]) == 0
    (row,) = json.loads(capsys.readouterr().out)["rows"]
    assert row["gates"] == 18 and row["verified"]
    assert row["reductionRatio"] == pytest.approx(0.625, abs=1e-3)
    assert main(["sweep", "0"]) == 1


def test_gen_from_file(tmp_path, capsys):
    spec = tmp_path / "bell.json"
    spec.write_text(json.dumps({"nQubits": 2, "gates": [{"kind": "H", "qubits": [0]},
                                                          {"kind": "CNOT", "qubits": [0, 1]}]}))
    out = tmp_path / "bell.ll"
    assert main(["gen", str(spec), "-o", str(out), "--no-wrap"]) == 0
    assert "define void @bell__main()" in out.read_text()

    spec.write_text(json.dumps({"nQubits": 2, "gates": [{"kind": "H", "qubits": [0], "x": 1}]}))
    assert main(["gen", str(spec), "-o", str(out)]) == 1
    assert "schema error at gates[0]" in capsys.readouterr().err
    assert main(["gen", "nonesuch", "-o", str(out)]) == 1


def test_version_and_module_entry(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out
    run = subprocess.run([sys.executable, "-m", "qdfo", "--help"], capture_output=True, text=True)
    assert run.returncode == 0 and "sweep" in run.stdout
