import json
import subprocess
import sys

import pytest
from conftest import DATA, INTENTS, SCENARIOS

from maat.cli import main


def cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_human_and_json(capsys):
    code, out, _ = cli(capsys, "parse", str(INTENTS / "uc1.intent"))
    assert code == 0 and out.startswith("<allocate, ip_multicast, (ttl=32,essential)")
    code, out, _ = cli(capsys, "parse", "--json", str(INTENTS / "uc1.intent"))
    assert code == 0 and json.loads(out)["verb"] == "allocate"


def test_parse_errors(capsys, tmp_path):
    bad = tmp_path / "bad.intent"
    bad.write_text("<discover, x")
    code, _, err = cli(capsys, "parse", str(bad))
    assert code == 2 and "bad.intent:1:" in err
    code, _, err = cli(capsys, "parse", str(tmp_path / "none.intent"))
    assert code == 3 and "cannot read" in err


def test_compile(capsys):
    code, out, _ = cli(capsys, "compile", str(INTENTS / "uc3.intent"))
    lines = out.splitlines()
    assert code == 0 and lines[0].startswith("0: discover link=- [asn=123456!]")
    assert lines[-1].endswith("announce root")
    code, out, _ = cli(capsys, "compile", "--json", str(INTENTS / "uc3.intent"))
    assert len(json.loads(out)["actions"]) == 3


def test_compile_validation_and_custom_ontology(capsys, tmp_path):
    f = tmp_path / "t.intent"
    f.write_text("<transcode, video, NULL>")
    assert cli(capsys, "compile", str(f))[0] == 2
    code, out, _ = cli(capsys, "compile", "--ontology", str(DATA / "ontology_example.json"), str(f))
    assert code == 0 and out.startswith("0: ")


def test_compile_uses_env_ontology(tmp_path):
    f = tmp_path / "t.intent"
    f.write_text("<transcode, video, NULL>")
    env = {"MAAT_ONTOLOGY": str(DATA / "ontology_example.json"), "PATH": "/usr/bin:/bin"}
    p = subprocess.run([sys.executable, "-m", "maat.cli", "compile", str(f)],
                       capture_output=True, text=True, env=env)
    assert p.returncode == 0, p.stderr


def test_scenario_and_audit_score(capsys, tmp_path):
    audit = tmp_path / "uc1.jsonl"
    report = tmp_path / "r.json"
    code, out, _ = cli(capsys, "scenario", "run", str(SCENARIOS / "uc1.json"),
                       "--audit", str(audit), "--report", str(report))
    assert code == 0 and "reified group 239.0.0.1" in out
    assert json.loads(report.read_text())["conserved"] is True
    code, out, _ = cli(capsys, "audit", "score", "--json", str(audit))
    assert code == 0 and json.loads(out)["maat-office"]["mean"] == 1.0


def test_scenario_json_is_byte_stable(capsys, tmp_path):
    outs = []
    for _ in range(2):
        code, out, _ = cli(capsys, "scenario", "run", "--json", str(SCENARIOS / "mixed.json"),
                           "--audit", str(tmp_path / "a.jsonl"))
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1]


def test_scenario_failures(capsys, tmp_path):
    assert cli(capsys, "scenario", "run", str(tmp_path / "nope.json"))[0] == 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"topology": "x.json", "agents": []}))
    assert cli(capsys, "scenario", "run", str(bad), "--audit", str(tmp_path / "a.jsonl"))[0] == 5


def test_audit_score_errors(capsys, tmp_path):
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    assert cli(capsys, "audit", "score", str(empty))[0] == 3
    assert cli(capsys, "audit", "score", str(tmp_path / "missing"))[0] == 3


def test_submit_unreachable(capsys, tmp_path):
    f = tmp_path / "t.intent"
    f.write_text("<discover, x, NULL>")
    code, _, err = cli(capsys, "submit", "--agent", "127.0.0.1:1", "--requester", "a", "--timeout", "1", str(f))
    assert code == 4 and "cannot reach" in err


@pytest.fixture
def running_agent(tmp_path):
    cfg = tmp_path / "agent.json"
    cfg.write_text(json.dumps({"agent_id": "cli-agent", "state": str(DATA / "topologies" / "uc2a.json"),
                               "session_store": str(tmp_path / "sessions.json")}))
    proc = subprocess.Popen([sys.executable, "-m", "maat.cli", "agent", "run", "--config", str(cfg),
                             "--listen", "127.0.0.1:0"], stdout=subprocess.PIPE, text=True)
    line = proc.stdout.readline()
    assert "listening on" in line, line
    yield line.split()[-1], tmp_path
    proc.terminate()
    assert proc.wait(10) == 0
    assert (tmp_path / "sessions.json").exists()


def test_agent_submit_sessions(capsys, running_agent):
    endpoint, tmp = running_agent
    f = INTENTS / "uc2.intent"
    code, out, _ = cli(capsys, "submit", "--agent", endpoint, "--requester", "client", str(f))
    assert code == 0 and "reified" in out and "hadoop-near" in out
    code, out, _ = cli(capsys, "submit", "--agent", endpoint, "--requester", "ghost", "--json", str(f))
    assert code == 2 and json.loads(out)["outcome"]["kind"] == "rejected"
    code, out, _ = cli(capsys, "sessions", "list", "--agent", endpoint, "--json")
    assert code == 0 and [s["state"] for s in json.loads(out)] == ["closed", "closed"]
    code, out, _ = cli(capsys, "sessions", "list", "--agent", endpoint)
    assert code == 0 and out.count("closed") == 2


def test_agent_bad_config(capsys, tmp_path):
    cfg = tmp_path / "a.json"
    cfg.write_text(json.dumps({"agent_id": ""}))
    assert cli(capsys, "agent", "run", "--config", str(cfg))[0] == 2
    assert cli(capsys, "agent", "run", "--config", str(tmp_path / "none.json"))[0] == 3
