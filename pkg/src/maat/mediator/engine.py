"""Plan mediation: bind each action to a candidate or resource.

Selection for an action is filter-then-argmax: candidates violating any hard
constraint are dropped, survivors are scored by :func:`policy.utility`, and
the highest score wins with ties going to the smallest node id. Actions are
mediated greedily in plan order.
"""
from __future__ import annotations

import hashlib
import ipaddress
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Mapping, Sequence, Union

from ..compiler import (
    ActionRef,
    Advertize,
    Allocate,
    Connect,
    Constraint,
    Discover,
    Invoke,
    PrimitiveAction,
    Pull,
    Push,
    Regulate,
    ReificationPlan,
)
from ..intent_lang import Quantity, parse_value
from ..simnet.state import NetworkState, PoolExhausted, Snapshot, lowest_free
from ..simnet.topology import (
    Candidate,
    attrs_from_json,
    attrs_to_json,
)
from .policy import PolicyRule, ordered_rules, satisfies, utility

MULTICAST_KINDS = frozenset({"ip_multicast", "multicast"})
DEFAULT_TTL = 1


@dataclass(frozen=True)
class AllocatedResource:
    kind: str
    resource_id: str
    group: str | None = None
    ttl: int | None = None
    members: tuple[str, ...] = ()


@dataclass(frozen=True)
class InstalledRule:
    kind: str
    traffic_spec: str
    rule_id: str
    constraints: tuple[Constraint, ...] = ()


@dataclass(frozen=True)
class Registration:
    node_id: str
    service: str
    attributes: Mapping[str, Any] = field(default_factory=dict, compare=False)


Binding = Union[Candidate, AllocatedResource, InstalledRule, Registration]


@dataclass(frozen=True)
class Reified:
    bindings: Mapping[int, Binding]
    score: float = 1.0
    session_id: str | None = None
    hard_total: int = 0
    soft_total: int = 0
    soft_satisfied: int = 0
    utilities: Mapping[int, float] = field(default_factory=dict, compare=False)
    escalation_count: int = 0
    kind = "reified"


@dataclass(frozen=True)
class Failed:
    unsatisfied: tuple[Constraint, ...] = ()
    action: int | None = None
    reason: str = ""
    session_id: str | None = None
    hard_total: int = 0
    soft_total: int = 0
    escalation_count: int = 0
    kind = "failed"


@dataclass(frozen=True)
class NonIdnFallback:
    reason: str
    session_id: str | None = None
    escalation_count: int = 0
    kind = "fallback"


@dataclass(frozen=True)
class Rejected:
    errors: tuple[str, ...]
    session_id: str | None = None
    escalation_count: int = 0
    kind = "rejected"


MediationResult = Union[Reified, Failed, NonIdnFallback, Rejected]


@dataclass(frozen=True)
class Selection:
    chosen: Candidate | None
    utility: Fraction | None
    soft_satisfied: int
    survivors: tuple[Candidate, ...]
    blocking: tuple[Constraint, ...]


def select(candidates: Sequence[Candidate], constraints: Sequence[Constraint],
           rules: Sequence[PolicyRule] = (), soft_weight: float = 1.0) -> Selection:
    """Filter by hard constraints, then argmax with node-id tie-break.

    ``rules`` must already be in evaluation order (see ``ordered_rules``).
    """
    hard = [c for c in constraints if c.hard]
    soft = [c for c in constraints if not c.hard]
    survivors = [c for c in candidates if all(satisfies(h, c.attributes) for h in hard)]
    if not survivors:
        if candidates:
            blocking = tuple(h for h in hard if any(not satisfies(h, c.attributes) for c in candidates))
        else:
            blocking = tuple(hard)
        return Selection(None, None, 0, (), blocking)
    best: tuple[Fraction, int, Candidate] | None = None
    for cand in survivors:
        score, met = utility(cand.attributes, soft, rules, soft_weight)
        if best is None or score > best[0] or (score == best[0] and cand.node_id < best[2].node_id):
            best = (score, met, cand)
    assert best is not None
    return Selection(best[2], best[0], best[1], tuple(survivors), ())


class _Context:
    def __init__(self, plan, snapshot, rules, requester, soft_weight):
        self.plan = plan
        self.snapshot = snapshot
        self.rules = rules
        self.requester = requester
        self.soft_weight = soft_weight
        self.bindings: dict[int, Binding] = {}
        self.survivors: dict[int, tuple[Candidate, ...]] = {}
        self.utilities: dict[int, float] = {}
        self.soft_satisfied = 0
        self.groups_taken: set[str] = set()

    def bound_candidate(self, ref: ActionRef) -> Candidate | None:
        b = self.bindings.get(ref.index)
        return b if isinstance(b, Candidate) else None


def _counts(plan: ReificationPlan) -> tuple[int, int]:
    cs = [c for a in plan.actions for c in a.constraints]
    hard = sum(1 for c in cs if c.hard)
    return hard, len(cs) - hard


def mediate(plan: ReificationPlan, snapshot: Snapshot, policies: Sequence[PolicyRule] = (),
            requester: str = "", soft_weight: float = 1.0) -> MediationResult:
    """Bind every action of ``plan`` against ``snapshot``; pure."""
    hard_total, soft_total = _counts(plan)
    ctx = _Context(plan, snapshot, ordered_rules(policies), requester, soft_weight)
    for index, action in enumerate(plan.actions):
        failure = _mediate_action(ctx, index, action)
        if failure is not None:
            return replace(failure, hard_total=hard_total, soft_total=soft_total)
    score = ctx.soft_satisfied / soft_total if soft_total else 1.0
    return Reified(
        dict(ctx.bindings), score, None, hard_total, soft_total, ctx.soft_satisfied, dict(ctx.utilities),
    )


def _fail(index: int, reason: str, unsatisfied=()) -> Failed:
    return Failed(tuple(unsatisfied), index, reason)


def _mediate_action(ctx: _Context, index: int, action: PrimitiveAction) -> Failed | None:
    req = ctx.requester
    if isinstance(action, Advertize):
        attrs = {c.key: c.value for c in action.constraints if c.comparator == "="}
        if action.instance:
            attrs["instance"] = parse_value(action.instance)
        ctx.bindings[index] = Registration(req, action.service_name, attrs)
        ctx.soft_satisfied += sum(1 for c in action.constraints if not c.hard)
        return None
    if isinstance(action, Regulate):
        ctx.bindings[index] = InstalledRule(
            action.kind, action.traffic_spec, _rule_id(action), action.constraints,
        )
        ctx.soft_satisfied += sum(1 for c in action.constraints if not c.hard)
        return None
    if isinstance(action, Allocate):
        return _allocate(ctx, index, action)

    universe, reason = _universe(ctx, action)
    if universe is None:
        return _fail(index, reason, [c for c in action.constraints if c.hard])
    sel = select(universe, action.constraints, ctx.rules, ctx.soft_weight)
    if sel.chosen is None:
        if not universe:
            return _fail(index, reason or "no candidates", sel.blocking)
        return _fail(index, "no candidate satisfies the essential constraints", sel.blocking)
    ctx.bindings[index] = sel.chosen
    ctx.survivors[index] = sel.survivors
    ctx.utilities[index] = float(sel.utility)
    ctx.soft_satisfied += sel.soft_satisfied
    return None


def _universe(ctx: _Context, action: PrimitiveAction) -> tuple[list[Candidate] | None, str]:
    """Candidate universe for node-binding actions, or (None, reason)."""
    snap, req = ctx.snapshot, ctx.requester

    def linked(ref: ActionRef) -> tuple[list[Candidate] | None, str]:
        cand = ctx.bound_candidate(ref)
        if cand is None:
            return None, f"action {ref.index} is not bound to a node"
        return [cand], ""

    def node_or_service(name: str, service: str) -> list[Candidate]:
        if snap.can_see(name):
            return [snap.candidate(name, req, service)]
        return snap.candidates(name, req)

    if isinstance(action, Discover):
        return snap.candidates(action.service_name, req), f"no visible node offers {action.service_name!r}"
    if isinstance(action, Invoke):
        return snap.candidates(action.verb, req), f"no visible node offers {action.verb!r}"
    if isinstance(action, Connect):
        if isinstance(action.target, ActionRef):
            return linked(action.target)
        if isinstance(action.target, str):
            return node_or_service(action.target, action.peer_spec), f"peer {action.target!r} not found"
        return snap.candidates(action.peer_spec, req), f"no visible node offers {action.peer_spec!r}"
    if isinstance(action, Push):
        if isinstance(action.target, ActionRef):
            return linked(action.target)
        if isinstance(action.target, str):
            return node_or_service(action.target, action.target), f"target {action.target!r} not found"
        return [snap.candidate(req, req)], ""
    if isinstance(action, Pull):
        if isinstance(action.source, ActionRef):
            return linked(action.source)
        if isinstance(action.source, str):
            return node_or_service(action.source, ""), f"source {action.source!r} not found"
        return snap.content_holders(action.content, req), f"no visible holder of {action.content!r}"
    raise TypeError(f"unexpected action {action!r}")


def _rule_id(action: Regulate) -> str:
    doc = [action.kind, action.traffic_spec, [c.to_json() for c in action.constraints]]
    return "rule-" + hashlib.sha1(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:12]


def _allocate(ctx: _Context, index: int, action: Allocate) -> Failed | None:
    req = ctx.requester
    members = {req}
    over = action.over
    if isinstance(over, ActionRef):
        survivors = ctx.survivors.get(over.index)
        if survivors is None:
            cand = ctx.bound_candidate(over)
            if cand is None:
                return _fail(index, f"action {over.index} defines no members")
            survivors = (cand,)
        members.update(c.node_id for c in survivors)
    elif isinstance(over, str):
        if not ctx.snapshot.has_node(over):
            return _fail(index, f"unknown member {over!r}")
        members.add(over)
    members_t = tuple(sorted(members))
    ctx.soft_satisfied += sum(1 for c in action.constraints if not c.hard)

    if action.resource_kind.lower() not in MULTICAST_KINDS:
        doc = [action.resource_kind, members_t, [c.to_json() for c in action.constraints]]
        rid = "res-" + hashlib.sha1(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:12]
        ctx.bindings[index] = AllocatedResource(action.resource_kind, rid, members=members_t)
        return None

    ttl = DEFAULT_TTL
    for c in action.constraints:
        if c.key != "ttl" or c.comparator != "=":
            continue
        v = c.value
        if not (isinstance(v, Quantity) and not v.unit and float(v.number).is_integer()
                and 1 <= v.number <= 255):
            return _fail(index, "ttl must be an integer in 1..255", [c])
        ttl = int(v.number)
    try:
        group = lowest_free(ipaddress.ip_network(ctx.snapshot.pool),
                            set(ctx.snapshot.allocated) | ctx.groups_taken)
    except PoolExhausted as exc:
        return _fail(index, str(exc))
    ctx.groups_taken.add(group)
    ctx.bindings[index] = AllocatedResource(action.resource_kind, group, group, ttl, members_t)
    return None


# --------------------------------------------------------------------------
# Applying a result to network state

def commit(state: NetworkState, plan: ReificationPlan, result: Reified) -> Reified:
    """Carry out a reified plan's side effects; returns the result as applied.

    A multicast address taken since the snapshot is replaced by the next free one.
    """
    bindings = dict(result.bindings)
    with state.lock:
        for index, action in enumerate(plan.actions):
            b = bindings.get(index)
            if isinstance(b, AllocatedResource) and b.group is not None:
                addr = state.allocate_group(b.ttl or DEFAULT_TTL, b.members, b.group)
                if addr != b.group:
                    bindings[index] = replace(b, group=addr, resource_id=addr)
            elif isinstance(b, Registration):
                state.advertize(b.node_id, b.service, b.attributes)
            elif isinstance(b, InstalledRule):
                state.install_rule({
                    "rule_id": b.rule_id, "kind": b.kind, "traffic": b.traffic_spec,
                    "match": [str(c) for c in b.constraints],
                })
            elif isinstance(b, Candidate) and isinstance(action, Push):
                if action.announce or action.target is None:
                    state.announce(action.content, b.node_id)
                else:
                    state.place_content(b.node_id, action.content)
    return replace(result, bindings=bindings)


# --------------------------------------------------------------------------
# JSON

def binding_to_json(index: int, b: Binding) -> dict[str, Any]:
    if isinstance(b, Candidate):
        return {"action": index, "type": "candidate", "node_id": b.node_id,
                "service": b.service_name, "attributes": attrs_to_json(b.attributes)}
    if isinstance(b, AllocatedResource):
        return {"action": index, "type": "allocation", "kind": b.kind, "resource_id": b.resource_id,
                "group": b.group, "ttl": b.ttl, "members": list(b.members)}
    if isinstance(b, InstalledRule):
        return {"action": index, "type": "rule", "kind": b.kind, "traffic": b.traffic_spec,
                "rule_id": b.rule_id, "constraints": [c.to_json() for c in b.constraints]}
    return {"action": index, "type": "registration", "node_id": b.node_id, "service": b.service,
            "attributes": attrs_to_json(b.attributes)}


def binding_from_json(doc: Mapping[str, Any]) -> Binding:
    t = doc["type"]
    if t == "candidate":
        return Candidate(doc["node_id"], doc["service"], attrs_from_json(doc.get("attributes", {})))
    if t == "allocation":
        return AllocatedResource(doc["kind"], doc["resource_id"], doc.get("group"), doc.get("ttl"),
                                 tuple(doc.get("members", ())))
    if t == "rule":
        return InstalledRule(doc["kind"], doc["traffic"], doc["rule_id"],
                             tuple(Constraint.from_json(c) for c in doc.get("constraints", ())))
    if t == "registration":
        return Registration(doc["node_id"], doc["service"], attrs_from_json(doc.get("attributes", {})))
    raise ValueError(f"unknown binding type {t!r}")


def result_to_json(r: MediationResult) -> dict[str, Any]:
    doc: dict[str, Any] = {"kind": r.kind, "session_id": r.session_id,
                           "escalation_count": r.escalation_count}
    if isinstance(r, Reified):
        doc.update(
            score=r.score, hard_total=r.hard_total, soft_total=r.soft_total,
            soft_satisfied=r.soft_satisfied,
            bindings=[binding_to_json(i, r.bindings[i]) for i in sorted(r.bindings)],
            utilities={str(i): r.utilities[i] for i in sorted(r.utilities)},
        )
    elif isinstance(r, Failed):
        doc.update(action=r.action, reason=r.reason, hard_total=r.hard_total, soft_total=r.soft_total,
                   unsatisfied=[c.to_json() for c in r.unsatisfied])
    elif isinstance(r, NonIdnFallback):
        doc["reason"] = r.reason
    else:
        doc["errors"] = list(r.errors)
    return doc


def result_from_json(doc: Mapping[str, Any]) -> MediationResult:
    kind = doc["kind"]
    sid, esc = doc.get("session_id"), doc.get("escalation_count", 0)
    if kind == "reified":
        return Reified(
            {b["action"]: binding_from_json(b) for b in doc.get("bindings", [])},
            doc.get("score", 1.0), sid, doc.get("hard_total", 0), doc.get("soft_total", 0),
            doc.get("soft_satisfied", 0),
            {int(k): v for k, v in doc.get("utilities", {}).items()}, esc,
        )
    if kind == "failed":
        return Failed(tuple(Constraint.from_json(c) for c in doc.get("unsatisfied", [])),
                      doc.get("action"), doc.get("reason", ""), sid,
                      doc.get("hard_total", 0), doc.get("soft_total", 0), esc)
    if kind == "fallback":
        return NonIdnFallback(doc.get("reason", ""), sid, esc)
    if kind == "rejected":
        return Rejected(tuple(doc.get("errors", ())), sid, esc)
    raise ValueError(f"unknown result kind {kind!r}")
