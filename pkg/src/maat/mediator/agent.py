"""The mediation agent: sessions, local mediation, escalation to a parent."""
from __future__ import annotations

import enum
import json
import random
import threading
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from ..audit import AuditLog, MediationLogRecord
from ..compiler import ReificationPlan, compile_intent
from ..intent_lang import IntentExpr, IntentSyntaxError, parse, render
from ..ontology import OntologyError, OntologyRegistry, load_ontology, validate_intent
from ..simnet.clock import LogicalClock
from ..simnet.state import NetworkState, StateUnavailable
from ..simnet.topology import attrs_from_json, attrs_to_json, load_topology
from .engine import (
    Failed,
    MediationResult,
    NonIdnFallback,
    Registration,
    Reified,
    Rejected,
    binding_to_json,
    commit,
    mediate,
    result_from_json,
    result_to_json,
)
from .policy import PolicyRule
from .protocol import Envelope, ProtocolError, TransportError, decode, encode, error_envelope


@dataclass
class AgentConfig:
    agent_id: str
    scope_level: int = 0
    parent_endpoint: str | None = None
    mediation_timeout: float = 2.0
    max_escalations: int = 3
    policies: tuple[PolicyRule, ...] = ()
    ontology: str | None = None
    state: str | None = None
    subnet: str | None = None
    soft_weight: float = 1.0
    # simulated time one local mediation takes; at or past the timeout it times out
    mediation_delay: float = 0.0
    online: bool = True
    listen: str | None = None
    audit_log: str | None = None
    session_store: str | None = None
    seed: int | None = None

    def __post_init__(self):
        self.policies = tuple(self.policies)
        if not self.agent_id:
            raise ValueError("agent_id must be non-empty")
        if self.scope_level < 0:
            raise ValueError("scope_level must be >= 0")
        if self.mediation_timeout <= 0:
            raise ValueError("mediation_timeout must be positive")
        if self.max_escalations < 0:
            raise ValueError("max_escalations must be >= 0")
        if self.mediation_delay < 0:
            raise ValueError("mediation_delay must be >= 0")

    @classmethod
    def from_json(cls, doc: Mapping[str, Any], base_dir: str | Path | None = None) -> AgentConfig:
        doc = dict(doc)
        doc["policies"] = tuple(PolicyRule.from_json(p) for p in doc.get("policies", ()))
        if base_dir is not None:
            for key in ("ontology", "state", "audit_log", "session_store"):
                if doc.get(key):
                    doc[key] = str(Path(base_dir) / doc[key])
        known = cls.__dataclass_fields__
        unknown = set(doc) - set(known)
        if unknown:
            raise ValueError(f"unknown agent config fields: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> AgentConfig:
        path = Path(path)
        return cls.from_json(json.loads(path.read_text()), path.parent)

    def to_json(self) -> dict[str, Any]:
        doc = {k: getattr(self, k) for k in self.__dataclass_fields__}
        doc["policies"] = [p.to_json() for p in self.policies]
        return doc


def open_state(ref: str | Path) -> NetworkState:
    """A state file (``{"topology": ...}``) stays attached; a bare topology is in-memory."""
    path = Path(ref)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise StateUnavailable(f"cannot read {path}: {exc}") from None
    if isinstance(doc, dict) and isinstance(doc.get("topology"), dict):
        return NetworkState.from_json(doc, path=path)
    return NetworkState(load_topology(doc))


class SessionState(enum.Enum):
    CREATED = "created"
    MEDIATING = "mediating"
    REIFIED = "reified"
    FAILED = "failed"
    ESCALATED = "escalated"
    CLOSED = "closed"


_NEXT = {
    SessionState.CREATED: {SessionState.MEDIATING, SessionState.FAILED},
    SessionState.MEDIATING: {SessionState.REIFIED, SessionState.FAILED, SessionState.ESCALATED},
    SessionState.ESCALATED: {SessionState.REIFIED, SessionState.FAILED, SessionState.CLOSED},
    SessionState.REIFIED: {SessionState.CLOSED},
    SessionState.FAILED: {SessionState.CLOSED},
    SessionState.CLOSED: set(),
}


class SessionError(RuntimeError):
    pass


@dataclass
class Session:
    session_id: str
    intent_text: str
    requester: str
    created_at: float
    agent_chain: list[str]
    plan: ReificationPlan | None = None
    canonical: str | None = None
    result: MediationResult | None = None
    closed_at: float | None = None
    escalation_count: int = 0
    history: list[tuple[str, float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.history:
            self.history.append((SessionState.CREATED.value, self.created_at))

    @property
    def state(self) -> SessionState:
        return SessionState(self.history[-1][0])

    def advance(self, new: SessionState, at: float) -> None:
        if new not in _NEXT[self.state]:
            raise SessionError(f"session {self.session_id}: {self.state.value} -> {new.value}")
        self.history.append((new.value, at))

    def to_json(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "intent": self.intent_text,
            "requester": self.requester,
            "state": self.state.value,
            "created_at": self.created_at,
            "closed_at": self.closed_at,
            "escalation_count": self.escalation_count,
            "agent_chain": list(self.agent_chain),
            "plan_digest": self.plan.digest() if self.plan else None,
            "outcome": result_to_json(self.result) if self.result else None,
            "history": [list(h) for h in self.history],
        }


class MaatAgent:
    """Accepts intents, mediates them against local state and escalates upward.

    Mediations run on state snapshots; session transitions, audit appends and
    state commits are serialized through ``lock``.
    """

    def __init__(self, config: AgentConfig, state: NetworkState | None = None, *,
                 audit: AuditLog | None = None, clock=None,
                 ontology: OntologyRegistry | None = None, transport=None):
        self.config = config
        if state is None and config.state:
            state = open_state(config.state)
        self.state = state
        self.ontology = ontology if ontology is not None else load_ontology(config.ontology)
        self.audit = audit if audit is not None else AuditLog(config.audit_log)
        self.clock = clock if clock is not None else LogicalClock()
        self.transport = transport
        self.sessions: dict[str, Session] = {}
        self.lock = threading.RLock()
        self._rng = random.Random(f"{config.seed}:{config.agent_id}") if config.seed is not None else None

    # -- sessions --------------------------------------------------------
    def _new_session_id(self) -> str:
        while True:
            sid = str(uuid.UUID(int=self._rng.getrandbits(128), version=4)) if self._rng else str(uuid.uuid4())
            if sid not in self.sessions:
                return sid

    def _open(self, text: str, requester: str) -> Session:
        with self.lock:
            s = Session(self._new_session_id(), text, requester, self.clock.now(), [self.config.agent_id])
            self.sessions[s.session_id] = s
            return s

    def _close(self, s: Session, result: MediationResult) -> MediationResult:
        result = replace(result, session_id=s.session_id, escalation_count=s.escalation_count)
        with self.lock:
            now = self.clock.now()
            if s.state in (SessionState.CREATED, SessionState.MEDIATING):
                s.advance(SessionState.REIFIED if isinstance(result, Reified) else SessionState.FAILED, now)
            elif s.state is SessionState.ESCALATED and isinstance(result, (Reified, Failed)):
                s.advance(SessionState.REIFIED if isinstance(result, Reified) else SessionState.FAILED, now)
            s.advance(SessionState.CLOSED, now)
            s.result = result
            s.closed_at = now
            self.audit.append(self._record(s, result))
        return result

    def _record(self, s: Session, r: MediationResult) -> MediationLogRecord:
        hard_total = soft_total = 0
        if s.plan is not None:
            cs = [c for a in s.plan.actions for c in a.constraints]
            hard_total = sum(1 for c in cs if c.hard)
            soft_total = len(cs) - hard_total
        hard_sat = soft_sat = 0
        bindings: list[dict[str, Any]] = []
        if isinstance(r, Reified):
            hard_sat, soft_sat = hard_total, r.soft_satisfied
            for i in sorted(r.bindings):
                b = binding_to_json(i, r.bindings[i])
                b.pop("attributes", None)
                bindings.append(b)
        elif isinstance(r, Failed):
            hard_sat = max(0, hard_total - len(r.unsatisfied))
        return MediationLogRecord(
            session_id=s.session_id,
            agent_id=self.config.agent_id,
            logical_timestamp=self.audit.next_timestamp(self.config.agent_id),
            intent=s.canonical if s.canonical is not None else s.intent_text,
            plan_digest=s.plan.digest() if s.plan else None,
            outcome=r.kind,
            bindings=tuple(bindings),
            hard_total=hard_total,
            hard_satisfied=hard_sat,
            soft_total=soft_total,
            soft_satisfied=soft_sat,
            escalation_count=s.escalation_count,
        )

    def session_table(self) -> list[dict[str, Any]]:
        with self.lock:
            return [s.to_json() for s in self.sessions.values()]

    def save_sessions(self, path: str | Path | None = None) -> Path | None:
        path = path or self.config.session_store
        if not path:
            return None
        path = Path(path)
        path.write_text(json.dumps({"agent_id": self.config.agent_id, "sessions": self.session_table()},
                                   indent=2, sort_keys=True) + "\n")
        return path

    # -- front end -------------------------------------------------------
    def _front(self, text: str, requester: str) -> tuple[IntentExpr, ReificationPlan] | Rejected:
        try:
            intent = parse(text)
        except IntentSyntaxError as exc:
            return Rejected(tuple(str(d) for d in exc.diagnostics))
        issues = validate_intent(intent, self.ontology)
        if issues:
            return Rejected(tuple(f"{i.kind} at {i.path}: {i.message}" for i in issues))
        try:
            plan = compile_intent(intent, self.ontology)
        except (OntologyError, ValueError) as exc:
            return Rejected((str(exc),))
        if self.state is None:
            raise StateUnavailable(f"agent {self.config.agent_id} has no state source")
        if not self.state.topology.node_map.get(requester):
            return Rejected((f"unknown requester {requester!r}",))
        return intent, plan

    def submit_intent(self, text: str, requester: str) -> MediationResult:
        """Mediate one intent end to end; always closes a session and logs it."""
        s = self._open(text, requester)
        try:
            front = self._front(text, requester)
        except StateUnavailable as exc:
            self._close(s, Rejected((str(exc),)))
            raise
        if isinstance(front, Rejected):
            return self._close(s, front)
        intent, plan = front
        with self.lock:
            s.plan, s.canonical = plan, render(intent)
            s.advance(SessionState.MEDIATING, self.clock.now())
        local = self._attempt(plan, requester)
        if isinstance(local, Reified):
            return self._close(s, local)
        if self.can_escalate():
            return self._close(s, self.escalate(s))
        if local is None:
            why = "escalation limit reached" if self.config.parent_endpoint else "no wider scope"
            return self._close(s, NonIdnFallback(f"{why}: mediation timed out"))
        return self._close(s, local)

    def _attempt(self, plan: ReificationPlan, requester: str) -> MediationResult | None:
        """One local mediation; None when it exceeds the timeout."""
        cfg = self.config
        if cfg.mediation_delay >= cfg.mediation_timeout:
            self.clock.advance(cfg.mediation_timeout)
            return None
        self.clock.advance(cfg.mediation_delay)
        with self.lock:
            result = mediate(plan, self.state.snapshot(cfg.subnet), cfg.policies, requester, cfg.soft_weight)
            if isinstance(result, Reified):
                result = commit(self.state, plan, result)
        return result

    # -- escalation ------------------------------------------------------
    def can_escalate(self) -> bool:
        return bool(self.config.parent_endpoint) and self.config.max_escalations > 0

    def _forward(self, text: str, requester: str, hop: int) -> tuple[MediationResult, list[str]]:
        cfg = self.config
        if self.transport is None:
            return NonIdnFallback("parent unreachable: no transport", escalation_count=hop), []
        env = Envelope("ESCALATE", {"intent_text": text, "requester": requester, "hop_count": hop})
        # the parent may itself escalate; give it the rest of the budget
        budget = cfg.mediation_timeout * (cfg.max_escalations - hop + 2)
        try:
            reply = self.transport.request(cfg.parent_endpoint, env, budget, cfg.mediation_timeout)
        except TransportError as exc:
            return NonIdnFallback(f"parent unreachable: {exc}", escalation_count=hop), []
        if reply.type != "RESULT":
            return NonIdnFallback(f"parent replied {reply.type}: {reply.body.get('message', '')}",
                                  escalation_count=hop), []
        result = result_from_json(reply.body["outcome"])
        return result, list(reply.body.get("agent_chain", []))

    def escalate(self, s: Session) -> MediationResult:
        """Hand ``s`` to the parent agent; its answer is taken as final."""
        cfg = self.config
        if not cfg.parent_endpoint:
            return NonIdnFallback("no wider scope", escalation_count=s.escalation_count)
        if s.escalation_count >= cfg.max_escalations:
            return NonIdnFallback("escalation limit reached", escalation_count=s.escalation_count)
        with self.lock:
            s.escalation_count += 1
            s.advance(SessionState.ESCALATED, self.clock.now())
        result, chain = self._forward(s.intent_text, s.requester, s.escalation_count)
        with self.lock:
            s.agent_chain.extend(chain)
            s.escalation_count = max(s.escalation_count, result.escalation_count)
        return result

    def handle_escalation(self, text: str, requester: str, hop: int) -> tuple[MediationResult, list[str]]:
        """Mediate an intent escalated from a child. No session is opened here."""
        me = [self.config.agent_id]
        try:
            front = self._front(text, requester)
        except StateUnavailable as exc:
            return NonIdnFallback(str(exc), escalation_count=hop), me
        if isinstance(front, Rejected):
            return replace(front, escalation_count=hop), me
        _, plan = front
        local = self._attempt(plan, requester)
        if isinstance(local, Reified):
            return replace(local, escalation_count=hop), me
        if self.config.parent_endpoint and hop < self.config.max_escalations:
            result, chain = self._forward(text, requester, hop + 1)
            return result, me + chain
        why = "no wider scope" if not self.config.parent_endpoint else "escalation limit reached"
        detail = local.reason if isinstance(local, Failed) else "mediation timed out"
        return NonIdnFallback(f"{why} at {self.config.agent_id}: {detail}", escalation_count=hop), me

    # -- advertize -------------------------------------------------------
    def handle_advertize(self, service: str, origin: str,
                         attrs: Mapping[str, Any] | None = None) -> Registration:
        if self.state is None:
            raise StateUnavailable(f"agent {self.config.agent_id} has no state source")
        with self.lock:
            inst = self.state.advertize(origin, service, attrs or {})
        return Registration(origin, service, dict(inst.attrs))

    # -- wire ------------------------------------------------------------
    def handle_message(self, env: Envelope) -> Envelope:
        b = env.body
        if env.type == "PING":
            return Envelope("PONG", {"agent_id": self.config.agent_id}, env.msg_id)
        if env.type == "SUBMIT_INTENT":
            r = self.submit_intent(b["intent_text"], b["requester"])
            return Envelope("RESULT", {"session_id": r.session_id, "outcome": result_to_json(r)}, env.msg_id)
        if env.type == "ESCALATE":
            r, chain = self.handle_escalation(b["intent_text"], b["requester"], b["hop_count"])
            return Envelope("RESULT", {"session_id": None, "outcome": result_to_json(r),
                                       "agent_chain": chain}, env.msg_id)
        if env.type == "ADVERTIZE":
            try:
                reg = self.handle_advertize(b["service"], b["origin"], attrs_from_json(b["attrs"]))
            except (KeyError, ValueError, TypeError) as exc:
                return error_envelope("bad_advertize", str(exc), env.msg_id)
            outcome = {"kind": "registered", "node_id": reg.node_id, "service": reg.service,
                       "attributes": attrs_to_json(reg.attributes)}
            return Envelope("RESULT", {"session_id": None, "outcome": outcome}, env.msg_id)
        if env.type == "LIST_SESSIONS":
            return Envelope("SESSIONS", {"agent_id": self.config.agent_id,
                                         "sessions": self.session_table()}, env.msg_id)
        return error_envelope("unexpected_type", f"agents do not accept {env.type}", env.msg_id)

    def handle_line(self, line: bytes) -> bytes:
        """Answer one wire message; malformed input yields an ERROR, never an exception."""
        try:
            env = decode(line)
        except ProtocolError as exc:
            return encode(error_envelope(exc.code, str(exc), exc.msg_id))
        try:
            return encode(self.handle_message(env))
        except StateUnavailable as exc:
            return encode(error_envelope("state_unavailable", str(exc), env.msg_id))
        except Exception as exc:  # keep serving whatever one request does
            return encode(error_envelope("internal", f"{type(exc).__name__}: {exc}", env.msg_id))
