import json

import pytest
from conftest import TOPOLOGIES, intent_text

from maat.audit import AuditLog, read_log
from maat.mediator.agent import AgentConfig, MaatAgent, SessionError, SessionState, open_state
from maat.mediator.engine import Failed, NonIdnFallback, Reified, Rejected
from maat.mediator.protocol import InProcessTransport
from maat.simnet.clock import LogicalClock
from maat.simnet.state import NetworkState, StateUnavailable
from maat.simnet.topology import load_topology


def make(topo="uc2a", **cfg):
    cfg.setdefault("agent_id", "a1")
    return MaatAgent(AgentConfig(**cfg), NetworkState(load_topology(TOPOLOGIES / f"{topo}.json")),
                     audit=AuditLog())


def pair(leaf_cfg=None, parent_cfg=None, topo="hierarchy"):
    clock = LogicalClock()
    net = InProcessTransport(clock)
    state = NetworkState(load_topology(TOPOLOGIES / f"{topo}.json"))
    audit = AuditLog()
    leaf = MaatAgent(AgentConfig(**{"agent_id": "lan", "subnet": "lan", "parent_endpoint": "metro",
                                    "max_escalations": 1, **(leaf_cfg or {})}),
                     state, audit=audit, clock=clock, transport=net)
    parent = MaatAgent(AgentConfig(**{"agent_id": "metro", "subnet": "metro", **(parent_cfg or {})}),
                       state, audit=audit, clock=clock, transport=net)
    net.register("lan", leaf)
    net.register("metro", parent)
    return leaf, parent, clock


HADOOP = "<discover, hadoop, (rtt<80ms,essential), NULL>"


def test_config_validation_and_json(tmp_path):
    for bad in ({"agent_id": ""}, {"agent_id": "x", "mediation_timeout": 0},
                {"agent_id": "x", "max_escalations": -1}, {"agent_id": "x", "mediation_delay": -1}):
        with pytest.raises(ValueError):
            AgentConfig(**bad)
    with pytest.raises(ValueError):
        AgentConfig.from_json({"agent_id": "x", "colour": "red"})
    (tmp_path / "a.json").write_text(json.dumps({"agent_id": "x", "state": "s.json",
                                                  "policies": [{"stakeholder_id": "isp", "predicate": ["asn=1"],
                                                                "utility_delta": 1}]}))
    cfg = AgentConfig.load(tmp_path / "a.json")
    assert cfg.state == str(tmp_path / "s.json") and cfg.policies[0].stakeholder_id == "isp"
    assert AgentConfig.from_json(cfg.to_json()) == cfg


def test_session_lifecycle_reified():
    a = make()
    r = a.submit_intent(intent_text("uc2"), "client")
    assert isinstance(r, Reified) and r.session_id in a.sessions
    s = a.sessions[r.session_id]
    assert [h[0] for h in s.history] == ["created", "mediating", "reified", "closed"]
    assert s.state is SessionState.CLOSED and s.result == r


def test_session_rejects_bad_transition():
    a = make()
    s = a.sessions[a.submit_intent(HADOOP, "client").session_id]
    with pytest.raises(SessionError):
        s.advance(SessionState.MEDIATING, 0)


@pytest.mark.parametrize("text, requester, fragment", [
    ("<discover, hadoop", "client", "unexpected end"),
    ("<frobnicate, x, NULL>", "client", "UnknownVerb"),
    (HADOOP, "nobody", "unknown requester"),
])
def test_rejected_is_logged(text, requester, fragment):
    a = make()
    r = a.submit_intent(text, requester)
    assert isinstance(r, Rejected) and fragment in " ".join(r.errors)
    assert [h[0] for h in a.sessions[r.session_id].history] == ["created", "failed", "closed"]
    (rec,) = a.audit.records
    assert rec.outcome == "rejected" and rec.session_id == r.session_id


def test_missing_state_raises_but_still_closes():
    a = MaatAgent(AgentConfig("x"), None, audit=AuditLog())
    with pytest.raises(StateUnavailable):
        a.submit_intent(HADOOP, "client")
    assert len(a.audit.records) == 1 and all(s.state is SessionState.CLOSED for s in a.sessions.values())


def test_no_parent_failed_stays_failed():
    a = make("uc2c")
    r = a.submit_intent(intent_text("uc2"), "client")
    assert isinstance(r, Failed) and r.escalation_count == 0
    rec = a.audit.records[-1]
    assert (rec.outcome, rec.hard_total, rec.hard_satisfied) == ("failed", 2, 1)


def test_no_parent_timeout_falls_back():
    a = make("uc2a", mediation_delay=5.0, mediation_timeout=2.0)
    r = a.submit_intent(HADOOP, "client")
    assert isinstance(r, NonIdnFallback) and "no wider scope" in r.reason
    assert a.clock.now() == 2.0


def test_escalate_without_parent_is_fallback():
    a = make()
    s = a._open(HADOOP, "client")
    r = a.escalate(s)
    assert isinstance(r, NonIdnFallback) and r.reason == "no wider scope"


def test_leaf_fails_parent_reifies():
    leaf, parent, clock = pair()
    r = leaf.submit_intent(HADOOP, "client")
    assert isinstance(r, Reified) and r.escalation_count == 1
    assert r.bindings[0].node_id == "worker"
    s = leaf.sessions[r.session_id]
    assert s.agent_chain == ["lan", "metro"]
    assert [h[0] for h in s.history] == ["created", "mediating", "escalated", "reified", "closed"]
    assert parent.sessions == {} and len(leaf.audit.records) == 1
    assert leaf.audit.records[0].escalation_count == 1
    assert clock.now() <= 2 * leaf.config.mediation_timeout


def test_local_success_does_not_escalate():
    leaf, parent, _ = pair()
    r = leaf.submit_intent("<discover, printer, NULL>", "client")
    assert isinstance(r, Reified) and r.escalation_count == 0


def test_parent_fails_gives_fallback():
    leaf, parent, _ = pair()
    r = leaf.submit_intent("<discover, spark, NULL>", "client")
    assert isinstance(r, NonIdnFallback) and r.escalation_count == 1
    assert "at metro" in r.reason
    assert leaf.audit.records[0].outcome == "fallback"


def test_parent_offline_costs_one_timeout():
    leaf, parent, clock = pair(parent_cfg={"online": False})
    r = leaf.submit_intent(HADOOP, "client")
    assert isinstance(r, NonIdnFallback) and r.reason.startswith("parent unreachable")
    assert clock.now() == leaf.config.mediation_timeout


@pytest.mark.parametrize("max_esc", [1, 2, 3])
def test_escalation_time_bound(max_esc):
    # every agent times out, so each hop spends its full timeout
    clock = LogicalClock()
    net = InProcessTransport(clock)
    state = NetworkState(load_topology(TOPOLOGIES / "hierarchy.json"))
    agents = []
    for i in range(max_esc + 2):
        cfg = AgentConfig(f"a{i}", parent_endpoint=f"a{i + 1}" if i <= max_esc else None,
                          max_escalations=max_esc, mediation_delay=9.0, mediation_timeout=1.5)
        agents.append(MaatAgent(cfg, state, audit=AuditLog(), clock=clock, transport=net))
        net.register(cfg.agent_id, agents[-1])
    r = agents[0].submit_intent(HADOOP, "client")
    assert isinstance(r, NonIdnFallback)
    assert r.escalation_count == max_esc
    assert clock.now() <= (max_esc + 1) * 1.5


def test_advertize_then_discover(tmp_path):
    src = json.loads((TOPOLOGIES / "uc3_bare.json").read_text())
    state_file = tmp_path / "state.json"
    NetworkState(load_topology(src)).save(state_file)
    a = MaatAgent(AgentConfig("x", state=str(state_file)), audit=AuditLog())
    q = "<discover, cache, (asn=123456,essential), NULL>"
    assert isinstance(a.submit_intent(q, "publisher"), Failed)
    reg = a.handle_advertize("cache", "cache-a", {})
    assert reg.node_id == "cache-a"
    # a fresh agent on the same state file sees the registration
    b = MaatAgent(AgentConfig("y", state=str(state_file)), audit=AuditLog())
    assert b.submit_intent(q, "publisher").bindings[0].node_id == "cache-a"


def test_open_state_bare_topology():
    st = open_state(TOPOLOGIES / "uc1.json")
    assert st.path is None and "alice" in st.topology.node_map
    with pytest.raises(StateUnavailable):
        open_state("/nonexistent/state.json")


def test_seeded_session_ids_repeat():
    ids = []
    for _ in range(2):
        a = make(seed=11)
        ids.append([a.submit_intent(HADOOP, "client").session_id for _ in range(3)])
    assert ids[0] == ids[1] and len(set(ids[0])) == 3
    assert make(seed=12).submit_intent(HADOOP, "client").session_id != ids[0][0]


def test_session_store(tmp_path):
    a = make(session_store=str(tmp_path / "s.json"))
    a.submit_intent(HADOOP, "client")
    doc = json.loads(a.save_sessions().read_text())
    assert doc["agent_id"] == "a1" and doc["sessions"][0]["state"] == "closed"


def test_audit_file_written(tmp_path):
    log = tmp_path / "audit.jsonl"
    a = MaatAgent(AgentConfig("x"), NetworkState(load_topology(TOPOLOGIES / "uc2a.json")),
                  audit=AuditLog(log, truncate=True))
    a.submit_intent(HADOOP, "client")
    a.submit_intent("junk", "client")
    recs = list(read_log(log))
    assert [r.outcome for r in recs] == ["reified", "rejected"]
    assert [r.logical_timestamp for r in recs] == [1, 2]
