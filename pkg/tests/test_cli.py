import json
import subprocess
import sys

import pytest

from scpldpch.cli import SEED_ENV, format_table, run

from .conftest import FIXTURES

R4 = str(FIXTURES / "r4_opt.txt")
TOY = str(FIXTURES / "toy_w1.txt")


@pytest.fixture(autouse=True)
def _cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(SEED_ENV, raising=False)


def manifest(path):
    return json.loads(open(path).read())


def test_encode_decode_loopback(tmp_path):
    assert run(["lift", "--split", R4, "-o", "c.lift"]) == 0
    assert run(["encode", "--split", R4, "--lift", "c.lift", "--frames", "12", "--verify",
                "-o", "c.bits", "--info-out", "c.info", "--seed", "5"]) == 0
    assert run(["decode", "--split", R4, "--lift", "c.lift", "--bits", "c.bits", "--I", "2",
                "--reference", "c.info", "-o", "d.info"]) == 0
    res = manifest("d.info.manifest.json")["result"]
    assert res["bit_errors"] == 0 and res["frame_errors"] == 0 and res["frames"] == 12
    assert (tmp_path / "d.info").read_bytes() == (tmp_path / "c.info").read_bytes()


def test_manifest_replay_reproduces_outputs(tmp_path):
    assert run(["encode", "--split", R4, "--frames", "4", "-o", "a.bits", "--info-out", "a.info",
                "--seed", "3"]) == 0
    m = manifest("a.bits.manifest.json")
    assert m["tool"] == "scpldpch" and m["command"] == "encode"
    assert "--seed" in m["argv"] and m["argv"][m["argv"].index("--seed") + 1] == "3"
    first = dict(m["outputs"])
    (tmp_path / "a.bits").write_bytes(b"")
    assert run(["replay", "a.bits.manifest.json"]) == 0
    assert manifest("a.bits.manifest.json")["outputs"] == first


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(SEED_ENV, "17")
    assert run(["encode", "--split", R4, "--frames", "2", "-o", "e.bits", "--info-out", "e.info"]) == 0
    assert manifest("e.bits.manifest.json")["config"]["seed"] == 17
    monkeypatch.delenv(SEED_ENV)
    assert run(["encode", "--split", R4, "--frames", "2", "-o", "f.bits", "--info-out", "f.info",
                "--seed", "17"]) == 0
    assert (tmp_path / "e.info").read_bytes() == (tmp_path / "f.info").read_bytes()
    monkeypatch.setenv(SEED_ENV, "abc")
    assert run(["encode", "--split", R4, "--frames", "2", "-o", "g.bits", "--info-out", "g.info"]) == 1


@pytest.mark.parametrize("argv", [
    [],
    ["encode", "--split", "missing.txt", "-o", "x", "--info-out", "y"],
    ["pexit", "--split", TOY, "--L", "notanint"],
    ["lift", "--split", R4],
    ["decode", "--split", R4, "--bits", "nothere", "-o", "x"],
    ["encode", "--split", str(FIXTURES / "r4_tdc1.txt"), "-o", "x", "--info-out", "y"],
    ["ga", "--base", TOY, "--K", "5", "--N-g", "2", "-o", "x"],
    ["replay", "nothere.json"],
])
def test_usage_errors_exit_1(argv, capsys):
    assert run(argv) == 1


def test_lift_mismatch_rejected(tmp_path):
    assert run(["lift", "--split", R4, "-o", "c.lift"]) == 0
    assert run(["encode", "--split", str(FIXTURES / "r4_tdc2.txt"), "--lift", "c.lift",
                "-o", "x", "--info-out", "y"]) == 1


def test_format_table():
    txt = format_table([(-0.3, True, 80), (-0.45, False, 150), (-0.35, True, 104)], 150)
    head, body = txt.splitlines()
    assert head.split()[2:] == ["-0.30", "-0.35", "-0.45"]
    assert body.split() == ["N_it", "80", "104", ">150"]


def test_pexit_points(tmp_path, capsys):
    assert run(["pexit", "--split", TOY, "--L", "4", "--w", "500", "--ebn0=8.0,-3.0", "-o", "p.json"]) == 0
    out = capsys.readouterr().out
    assert "Eb/N0 (dB)" in out and ">150" in out
    data = json.loads((tmp_path / "p.json").read_text())
    assert data["threshold_db"] == 8.0
    assert [p["converged"] for p in data["ladder"]] == [True, False]


def test_ga_resume_via_cli(tmp_path):
    common = ["ga", "--base", TOY, "--K", "4", "--N-g", "2", "--L", "4", "--w", "200", "--start-db", "3.0",
              "--step-db", "1.0", "--max-levels", "2", "--seed", "2"]
    assert run(common + ["--generations", "3", "-o", "full.txt"]) == 0
    assert run(common + ["--generations", "2", "--checkpoint", "ck.json", "-o", "part.txt"]) == 0
    assert run(common + ["--generations", "3", "--resume", "ck.json", "-o", "resumed.txt"]) == 0
    assert (tmp_path / "full.txt").read_text() == (tmp_path / "resumed.txt").read_text()
    h_full = manifest("full.txt.manifest.json")["result"]["history"]
    h_res = manifest("resumed.txt.manifest.json")["result"]["history"]
    assert h_full == h_res


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "scpldpch.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
