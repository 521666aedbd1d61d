from fractions import Fraction

import pytest
from conftest import TOPOLOGIES, intent_text

from maat.compiler import Hardness, compile_intent
from maat.intent_lang import Cidr, Quantity, Text, parse
from maat.mediator.engine import (
    AllocatedResource,
    Failed,
    InstalledRule,
    Registration,
    Reified,
    commit,
    mediate,
    result_from_json,
    result_to_json,
    select,
)
from maat.mediator.policy import PolicyRule, compare, parse_constraint, satisfies, utility
from maat.ontology import builtin_ontology
from maat.simnet.state import NetworkState
from maat.simnet.topology import Candidate, load_topology

REG = builtin_ontology()


def plan(src):
    return compile_intent(parse(src), REG)


def state(name):
    return NetworkState(load_topology(TOPOLOGIES / f"{name}.json"))


def run(src, name, requester, rules=()):
    return mediate(plan(src), state(name).snapshot(), rules, requester)


# -- constraint semantics ---------------------------------------------------

@pytest.mark.parametrize("actual, cmp, expected, ok", [
    (Quantity(40, "ms"), "<", Quantity(50, "ms"), True),
    (Quantity(40, "ms"), "<", Quantity(0.05, "s"), True),
    (Quantity(60, "ms"), "<", Quantity(0.05, "s"), False),
    (Quantity(40, "ms"), "<", Quantity(50), True),
    (Quantity(5, "ms"), "=", Quantity(5, "mb"), False),
    (Quantity(50, "ms"), "<=", Quantity(50, "ms"), True),
    (Quantity(50, "ms"), ">=", Quantity(51, "ms"), False),
    (Cidr("1.2.3.0", 24), "=", Cidr("1.2.0.0", 16), True),
    (Cidr("1.2.0.0", 16), "=", Cidr("1.2.3.0", 24), False),
    (Cidr("1.2.3.0", 24), "<", Cidr("1.2.0.0", 16), False),
    (Text("a"), "=", Text("a"), True),
    (Text("a"), "<", Text("b"), False),
    (Text("32x"), "=", Quantity(32), False),
])
def test_compare(actual, cmp, expected, ok):
    assert compare(actual, cmp, expected) is ok


def test_satisfies_sets_and_missing():
    attrs = {"tags": frozenset({Text("a"), Text("b")}), "lat": frozenset({Quantity(3), Quantity(5)})}
    assert satisfies(parse_constraint("tags=a"), attrs)
    assert not satisfies(parse_constraint("tags=c"), attrs)
    assert satisfies(parse_constraint("lat<6"), attrs)
    assert not satisfies(parse_constraint("lat<4"), attrs)
    assert not satisfies(parse_constraint("gone=1"), attrs)


def test_utility_formula():
    soft = [parse_constraint("a=1", Hardness.SOFT), parse_constraint("b=1", Hardness.SOFT)]
    rules = [PolicyRule("isp", (parse_constraint("a=1"),), -0.5)]
    score, met = utility({"a": Quantity(1)}, soft, rules, soft_weight=2.0)
    assert met == 1 and score == Fraction(2) * Fraction(1, 2) - Fraction(1, 2)
    assert utility({}, [], [], 1.0) == (Fraction(1), 0)


def test_policy_rule_json_and_validation():
    r = PolicyRule.from_json({"stakeholder_id": "isp", "predicate": ["asn=999"], "utility_delta": -10})
    assert PolicyRule.from_json(r.to_json()) == r
    with pytest.raises(ValueError):
        PolicyRule("x", (), float("inf"))


# -- selection --------------------------------------------------------------

def cand(nid, **attrs):
    return Candidate(nid, "svc", {k: v for k, v in attrs.items()})


def test_tie_breaks_lexicographically():
    sel = select([cand("node_b", asn=Quantity(1)), cand("node_a", asn=Quantity(1))], [])
    assert sel.chosen.node_id == "node_a"


def test_policy_demotes_tied_candidate():
    rule = PolicyRule("isp", (parse_constraint("asn=999"),), -10.0)
    sel = select([cand("node_a", asn=Quantity(999)), cand("node_b", asn=Quantity(5))], [], [rule])
    assert sel.chosen.node_id == "node_b"


def test_hard_beats_any_utility():
    rule = PolicyRule("isp", (parse_constraint("asn=999"),), 1e6)
    hard = [parse_constraint("asn<10")]
    sel = select([cand("a", asn=Quantity(999)), cand("b", asn=Quantity(5))], hard, [rule])
    assert sel.chosen.node_id == "b"


# -- use cases --------------------------------------------------------------

def test_uc2_ladder():
    r = run(intent_text("uc2"), "uc2a", "client")
    assert isinstance(r, Reified) and r.bindings[0].node_id == "hadoop-near"
    assert r.soft_satisfied == 1 and r.score == 1.0
    r = run(intent_text("uc2"), "uc2b", "client")
    assert isinstance(r, Reified) and r.bindings[0].node_id == "hadoop-mid" and r.score == 0.0
    r = run(intent_text("uc2"), "uc2c", "client")
    assert isinstance(r, Failed) and r.action == 0
    assert [str(c) for c in r.unsatisfied] == ["rtt<80ms"]


def test_uc2_push_lands_on_discovered_node():
    r = run(intent_text("uc2"), "uc2a", "client")
    assert r.bindings[1].node_id == "hadoop-near"


def test_uc1_members_and_group():
    r = run(intent_text("uc1"), "uc1", "alice")
    g = r.bindings[1]
    assert isinstance(g, AllocatedResource)
    assert (g.group, g.ttl, g.members) == ("239.0.0.1", 32, ("alice", "bob", "charlie"))


def test_uc1_excludes_non_collaborator():
    doc = load_topology(TOPOLOGIES / "uc1.json")
    from dataclasses import replace

    from maat.simnet.topology import ServiceInstance
    bob = doc.node("bob")
    svc = ServiceInstance("GoogleDocs", {"userID": frozenset({Text("92cd701c0be")})})
    st = NetworkState(doc.with_node(replace(bob, services=(svc,))))
    r = mediate(plan(intent_text("uc1")), st.snapshot(), (), "alice")
    assert r.bindings[1].members == ("alice", "charlie")


def test_uc3_binds_asn_cache():
    r = run(intent_text("uc3"), "uc3", "publisher")
    assert all(r.bindings[i].node_id == "cache-a" for i in range(3))
    assert r.bindings[0].attributes["asn"] == Quantity(123456)
    assert r.score == 1.0


@pytest.mark.parametrize("ttl", ["0", "256", "3.5", "5ms"])
def test_bad_ttl_fails(ttl):
    r = run(f"<allocate, ip_multicast, (ttl={ttl}), <discover, GoogleDocs, NULL>>", "uc1", "alice")
    assert isinstance(r, Failed) and r.action == 1


def test_default_ttl_and_other_resources():
    r = run("<allocate, ip_multicast, <discover, GoogleDocs, NULL>>", "uc1", "alice")
    assert r.bindings[1].ttl == 1
    r = run("<allocate, bandwidth, (rate=10mbps), NULL>", "uc1", "alice")
    b = r.bindings[0]
    assert b.kind == "bandwidth" and b.resource_id.startswith("res-") and b.group is None


def test_regulate_rule_id_is_stable():
    a = run("<block, ssh, (port=22), NULL>", "uc1", "alice").bindings[0]
    b = run("<block, ssh, (port=22), NULL>", "uc1", "bob").bindings[0]
    assert isinstance(a, InstalledRule) and a.rule_id == b.rule_id and a.rule_id.startswith("rule-")


def test_advertize_registers_requester():
    r = run("<advertize, cache, (capacity=1gb), c1>", "uc3", "cache-b")
    reg = r.bindings[0]
    assert isinstance(reg, Registration) and reg.node_id == "cache-b"
    assert reg.attributes["capacity"] == Quantity(1, "gb")


def test_push_then_pull_content_holders():
    st = state("uc3")
    r = mediate(plan(intent_text("uc3")), st.snapshot(), (), "publisher")
    commit(st, plan(intent_text("uc3")), r)
    assert st.announcements == {"ABeautifulMind": ("cache-a",)}
    assert "831FD96B0.mp4" in str(st.topology.node("cache-a").attributes["content"])
    p = plan("<pull, 831FD96B0.mp4, NULL>")
    got = mediate(p, st.snapshot(), (), "publisher")
    assert got.bindings[0].node_id == "cache-a"
    got = mediate(plan("<pull, ABeautifulMind, NULL>"), st.snapshot(), (), "publisher")
    assert got.bindings[0].node_id == "cache-a"
    assert isinstance(mediate(plan("<pull, nothing, NULL>"), st.snapshot(), (), "publisher"), Failed)


def test_commit_moves_past_taken_group():
    st = state("uc1")
    p = plan(intent_text("uc1"))
    r1 = mediate(p, st.snapshot(), (), "alice")
    r2 = mediate(p, st.snapshot(), (), "alice")
    assert r1.bindings[1].group == r2.bindings[1].group == "239.0.0.1"
    commit(st, p, r1)
    assert commit(st, p, r2).bindings[1].group == "239.0.0.2"


def test_mediate_is_pure():
    st = state("uc1")
    before = st.to_json()
    mediate(plan(intent_text("uc1")), st.snapshot(), (), "alice")
    assert st.to_json() == before


def test_result_json_round_trip():
    for src, topo, req in [(intent_text("uc1"), "uc1", "alice"), (intent_text("uc2"), "uc2c", "client"),
                           ("<block, ssh, NULL>", "uc1", "alice")]:
        r = run(src, topo, req)
        assert result_from_json(result_to_json(r)) == r
