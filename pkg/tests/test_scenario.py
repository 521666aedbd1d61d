import json

import pytest
from conftest import SCENARIOS

from maat.simnet.scenario import ScenarioError, load_scenario, route, run_scenario

ALL = sorted(p.stem for p in SCENARIOS.glob("*.json"))


def run(name, audit=None):
    doc, base = load_scenario(SCENARIOS / f"{name}.json")
    return run_scenario(doc, base, audit)


@pytest.mark.parametrize("name", ALL)
def test_conservation(name):
    r = run(name)
    assert r.conserved and r.intents == sum(1 for s in r.steps if s.kind == "intent")


@pytest.mark.parametrize("name", ALL)
def test_rerun_is_byte_identical(name, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    ra, rb = run(name, a), run(name, b)
    assert a.read_bytes() == b.read_bytes() and a.stat().st_size > 0
    ja, jb = ra.to_json(), rb.to_json()
    ja.pop("audit_path"), jb.pop("audit_path")
    assert json.dumps(ja, sort_keys=True) == json.dumps(jb, sort_keys=True)


def test_seed_changes_session_ids(tmp_path):
    doc, base = load_scenario(SCENARIOS / "uc1.json")
    a = run_scenario(doc, base).steps[0].result["session_id"]
    b = run_scenario({**doc, "seed": doc.get("seed", 0) + 1}, base).steps[0].result["session_id"]
    assert a != b


def test_mixed_outcomes():
    r = run("mixed")
    kinds = [s.result["kind"] for s in r.steps]
    assert kinds[2] == "rejected" and kinds[0] == "reified"
    assert r.audit_records == 5


def test_escalation_scenario_times():
    r = run("escalation")
    (s,) = r.steps
    assert s.agent == "maat-lan" and s.result["kind"] == "reified" and s.result["escalation_count"] == 1
    r = run("no_parent_timeout")
    assert r.steps[0].result["kind"] == "fallback" and r.steps[0].finished_at - r.steps[0].started_at == 2.0


def test_advertize_step():
    r = run("uc3_advertize")
    kinds = [s.kind for s in r.steps]
    assert "advertize" in kinds
    assert r.steps[-1].result["kind"] == "reified"


def test_route_prefers_nearest_subnet():
    doc, base = load_scenario(SCENARIOS / "escalation.json")
    from maat.simnet.topology import load_topology

    topo = load_topology(base / doc["topology"])

    class A:
        def __init__(self, subnet):
            self.config = type("C", (), {"subnet": subnet})

    agents = {"lan": A("lan"), "metro": A("metro")}
    assert route(topo, agents, "client") == "lan"
    assert route(topo, agents, "worker") == "metro"
    assert route(topo, {"any": A(None)}, "worker") == "any"
    with pytest.raises(KeyError):
        route(topo, {"lan": A("lan")}, "worker")


@pytest.mark.parametrize("patch, step", [
    ({"topology": "../topologies/missing.json"}, None),
    ({"agents": [{"agent_id": "x", "bogus": 1}]}, None),
    ({"script": [{"from": "nobody", "intent": "<discover, x, NULL>"}]}, 0),
    ({"script": [{"from": "alice", "intent": "<discover, x, NULL>"}, {"intent": "x"}]}, 1),
    ({"script": [{"from": "alice", "agent": "ghost", "intent": "<discover, x, NULL>"}]}, 0),
])
def test_scenario_errors(patch, step):
    doc, base = load_scenario(SCENARIOS / "uc1.json")
    with pytest.raises(ScenarioError) as exc:
        run_scenario({**doc, **patch}, base)
    assert exc.value.step == step
