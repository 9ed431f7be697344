import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from szxc.cli import RunConfig, build_config, main, run

CORPUS = Path(__file__).resolve().parent.parent / "corpus"
QFT = str(CORPUS / "qft.ld")


def run_cli(*argv):
    out = io.StringIO()
    config = build_config(list(argv))
    status = run(config, out=out)
    return status, out.getvalue()


def test_check_ok():
    status, out = run_cli("check", QFT)
    assert status == 0
    assert "qft : ((n:Nat) -> (Vec Q n -o Vec Q n))" in out


def test_check_bad_exits_one(capsys):
    status, _ = run_cli("check", str(CORPUS / "bad" / "linear_dup.ld"))
    assert status == 1
    err = capsys.readouterr().err
    assert "linearity" in err
    assert err.split(":")[0].endswith("linear_dup.ld")


def test_missing_file_exits_one():
    status, _ = run_cli("check", "no_such_file.ld")
    assert status == 1


def test_compile_emits_family_json():
    status, out = run_cli("compile", QFT)
    assert status == 0
    doc = json.loads(out)
    assert doc["params"] == ["n"]


def test_compile_deterministic():
    _, out1 = run_cli("compile", QFT)
    _, out2 = run_cli("compile", QFT)
    assert out1 == out2


def test_instantiate_and_dot():
    status, out = run_cli("instantiate", QFT, "--param", "n=2", "--emit", "dot")
    assert status == 0
    assert out.startswith("digraph")


def test_instantiate_requires_params():
    status, _ = run_cli("instantiate", QFT)
    assert status == 1


def test_no_simplify_flag():
    _, full = run_cli("instantiate", QFT, "--param", "n=2")
    _, raw = run_cli("instantiate", QFT, "--param", "n=2", "--no-simplify")
    assert len(json.loads(raw)["nodes"]) > len(json.loads(full)["nodes"])


def test_simulate_prints_matrix():
    status, out = run_cli("simulate", QFT, "--param", "n=1")
    assert status == 0
    doc = json.loads(out)
    assert doc["q_in"] == 0 and doc["q_out"] == 2
    assert len(doc["matrix"]) == 16


def test_verify_passes():
    status, out = run_cli("verify", QFT, "--param", "n=1")
    assert status == 0
    assert out.startswith("PASS residual=")


def test_verify_failure_exits_two(monkeypatch):
    import szxc.cli as cli

    monkeypatch.setattr(cli, "verify_program",
                        lambda *a, **k: (1.0, None, None))
    status, out = run_cli("verify", QFT, "--param", "n=1")
    assert status == 2
    assert out.startswith("FAIL")


def test_eval_subcommand(tmp_path):
    src = tmp_path / "rev.ld"
    src.write_text("rev : (n:Nat) -> Vec Nat n\nrev = \\'n. reverse (0..n)\n")
    status, out = run_cli("eval", str(src), "--param", "n=4")
    assert status == 0
    assert json.loads(out) == [3, 2, 1, 0]


def test_reduce_subcommand(tmp_path):
    src = tmp_path / "num.ld"
    src.write_text("v : Vec Nat 2\nv = reverse (1..3)\n")
    status, out = run_cli("reduce", str(src))
    assert status == 0
    assert out.strip() == "2 :: 1 :: VNil[Nat]"


def test_reduce_trace(tmp_path):
    src = tmp_path / "num.ld"
    src.write_text("x : Nat\nx = 1+2+3\n")
    status, out = run_cli("reduce", str(src), "--trace")
    assert status == 0
    lines = out.strip().splitlines()
    assert lines[-1] == "6"
    assert len(lines) > 1


def test_max_qubits_env(monkeypatch):
    monkeypatch.setenv("SZXC_MAX_QUBITS", "2")
    config = build_config(["verify", QFT, "--param", "n=2"])
    assert config.max_qubits == 2
    status = run(config, out=io.StringIO())
    assert status == 1  # 4 boundary qubits exceed the configured cap


def test_rz_convention_flag():
    status, out = run_cli("verify", QFT, "--param", "n=2",
                          "--rz-convention", "pi")
    assert status == 0


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "szxc.cli", "check", QFT],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "crot" in proc.stdout
