import io
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from blockcloud.cli import main

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps({"seed": 2, "tasks": [{"id": "x", "tasker": "tasking-0"}]}))
    return p


def test_sim_run_ok(small):
    code, out, _ = run("sim", "run", "--config", str(small))
    lines = out.splitlines()
    assert code == 0
    summary = json.loads(lines[-1])
    assert summary["ev"] == "summary" and summary["seed"] == 2 and summary["violations"] == []


def test_sim_run_malformed(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"latency": {"min_us": -1}, "colour": 1}))
    code, out, err = run("sim", "run", "--config", str(bad))
    assert code == 1 and out == ""
    assert "latency.min_us" in err and "colour" in err


def test_sim_run_invariant_breach(tmp_path):
    p = tmp_path / "breach.json"
    p.write_text(json.dumps({"tasks": [{"tasker": "tasking-0"}], "inject_faults": {"conservation": True}}))
    code, _, err = run("sim", "run", "--config", str(p))
    assert code == 2 and "invariant violated" in err


def test_seed_precedence(small, monkeypatch):
    def seed_of(*extra):
        return json.loads(run("sim", "run", "--config", str(small), *extra)[1].splitlines()[-1])["seed"]
    assert seed_of() == 2
    monkeypatch.setenv("BLOCKCLOUD_SEED", "11")
    assert seed_of() == 11
    assert seed_of("--seed", "4") == 4


def test_sim_run_many_to_directory(small, tmp_path):
    other = tmp_path / "other.json"
    other.write_text(json.dumps({"seed": 3}))
    outdir = tmp_path / "out"
    code, _, _ = run("sim", "run", "--config", str(small), "--config", str(other), "--jobs", "2",
                     "--out", str(outdir))
    assert code == 0
    assert sorted(p.name for p in outdir.iterdir()) == ["other.jsonl", "small.jsonl"]


def test_parallel_matches_serial(small, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run("sim", "run", "--config", str(small), "--config", str(SCENARIOS / "basic.json"), "--out", str(a))
    run("sim", "run", "--config", str(small), "--config", str(SCENARIOS / "basic.json"), "--out", str(b),
        "--jobs", "2")
    for name in ("small.jsonl", "basic.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_sim_summary_table(small):
    code, out, _ = run("sim", "run", "--config", str(small), "--summary")
    assert code == 0 and "finalized tasks" in out and not out.startswith("{")


def test_econ_score_tables():
    code, out, _ = run("econ", "score", "--config", str(SCENARIOS / "scores.json"))
    assert code == 0
    got = {r["id"]: r["score"] for r in map(json.loads, out.splitlines())}
    assert got["task-1"] == "0.391250" and got["task-i"] == "0.587500" and got["task-N"] == "0.457500"
    assert got["super-1"] == "0.500000" and got["computing-1"] == "0.345000" and got["service-1"] == "0.695000"


def test_econ_score_empty(tmp_path):
    p = tmp_path / "empty.json"
    p.write_text("")
    assert run("econ", "score", "--config", str(p)) == (0, "", "")


def test_econ_score_bad_weights(tmp_path):
    p = tmp_path / "w.json"
    p.write_text(json.dumps({"nodes": [{"id": "n", "scores": [1, 1, 1], "weights": [0.5, 0.5, 0.5]}]}))
    code, out, err = run("econ", "score", "--config", str(p))
    assert code == 1 and "nodes[0]" in err and out == ""


def test_bft_select_worked_example():
    code, out, _ = run("bft", "select", "--config", str(SCENARIOS / "matrices.json"))
    rec = json.loads(out)
    assert code == 0 and rec["protocol"] == 1 and rec["name"] == "beta"
    assert rec["E"] == pytest.approx([0.85, 0.86])


def _matrices(tmp_path, doc):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(doc))
    return str(p)


def test_bft_select_single(tmp_path):
    doc = {"profiles": [{"name": "only", "kci": [1], "kpi": [3, 2, 1]}], "kci_prefs": [1],
           "kpi_weights": [0.4, 0.3, 0.3]}
    code, out, _ = run("bft", "select", "--config", _matrices(tmp_path, doc))
    assert code == 0 and json.loads(out)["protocol"] == 0


def test_bft_select_none_viable(tmp_path):
    doc = {"profiles": [{"name": "a", "kci": [0], "kpi": [1, 1]}], "kci_prefs": [1], "kpi_weights": [0.5, 0.5]}
    code, out, err = run("bft", "select", "--config", _matrices(tmp_path, doc))
    assert code == 3 and out == "" and "no viable protocol" in err


def test_bft_select_bad_input(tmp_path):
    code, _, err = run("bft", "select", "--config", _matrices(tmp_path, {"profiles": []}))
    assert code == 1 and err


def test_xchain_demo():
    code, out, _ = run("xchain", "demo", "--seed", "1")
    last = json.loads(out.splitlines()[-1])
    assert code == 0 and last["restored_byte_identical"] is True
    assert set(last["normal_per_base"].values()) == {1}
    assert out == run("xchain", "demo", "--seed", "1")[1]


def test_replay_roundtrip(small, tmp_path):
    log = tmp_path / "run.jsonl"
    assert run("sim", "run", "--config", str(small), "--out", str(log))[0] == 0
    code, out, _ = run("replay", "--config", str(small), "--log", str(log))
    assert code == 0 and "identical" in out
    log.write_text(log.read_text().replace('"seed":2', '"seed":3'))
    code, _, err = run("replay", "--config", str(small), "--log", str(log))
    assert code == 2 and "differs" in err


def test_console_entry_point(small):
    env = dict(os.environ)
    env.pop("BLOCKCLOUD_SEED", None)
    a = subprocess.run([sys.executable, "-m", "blockcloud.cli", "sim", "run", "--config", str(small)],
                       capture_output=True, env=env)
    b = subprocess.run([sys.executable, "-m", "blockcloud.cli", "sim", "run", "--config", str(small)],
                       capture_output=True, env=env)
    assert a.returncode == 0 and a.stdout == b.stdout and a.stdout
