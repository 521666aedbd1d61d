"""Replay scripted intents against in-process agents on a logical clock.

A scenario document::

    {"name": ..., "seed": 7, "topology": "uc1.json" | {...},
     "agents": [AgentConfig, ...],
     "script": [{"at": 0, "from": "alice", "intent": "<...>"},
                {"at": 1, "from": "n", "advertize": {"service": "cache", "attrs": {...}}}]}

``intent_file`` may replace ``intent``. A step goes to the agent named by
``agent``, else to the agent whose subnet is closest above the sender.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from ..audit import AuditLog, score_agents
from ..ontology import load_ontology
from .clock import LogicalClock
from .state import NetworkState
from .topology import Topology, attrs_from_json, load_topology


class ScenarioError(RuntimeError):
    def __init__(self, step: int | None, message: str):
        where = f"step {step}: " if step is not None else ""
        super().__init__(where + message)
        self.step = step


@dataclass
class StepReport:
    step: int
    at: float
    sender: str
    agent: str
    kind: str
    intent: str | None
    started_at: float
    finished_at: float
    result: dict[str, Any]

    def to_json(self) -> dict[str, Any]:
        return {
            "step": self.step, "at": self.at, "from": self.sender, "agent": self.agent,
            "kind": self.kind, "intent": self.intent, "started_at": self.started_at,
            "finished_at": self.finished_at, "elapsed": self.finished_at - self.started_at,
            "result": self.result,
        }


@dataclass
class ScenarioReport:
    name: str
    seed: int
    steps: list[StepReport]
    audit_path: str | None
    intents: int
    audit_records: int
    closed_sessions: int
    scores: dict[str, dict[str, Any]] = field(default_factory=dict)
    groups: list[dict[str, Any]] = field(default_factory=list)
    announcements: dict[str, list[str]] = field(default_factory=dict)

    @property
    def conserved(self) -> bool:
        return self.intents == self.audit_records == self.closed_sessions

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name, "seed": self.seed, "audit_path": self.audit_path,
            "intents": self.intents, "audit_records": self.audit_records,
            "closed_sessions": self.closed_sessions, "conserved": self.conserved,
            "scores": self.scores, "groups": self.groups, "announcements": self.announcements,
            "steps": [s.to_json() for s in self.steps],
        }


def route(topo: Topology, agents: Mapping[str, Any], sender: str) -> str:
    """Agent id serving ``sender``: its subnet's agent or the nearest ancestor's."""
    by_subnet: dict[str | None, str] = {}
    for aid, agent in sorted(agents.items()):
        by_subnet.setdefault(agent.config.subnet, aid)
    node = topo.node(sender)
    for sub in topo.ancestors(node.subnet_id):
        if sub in by_subnet:
            return by_subnet[sub]
    if None in by_subnet:
        return by_subnet[None]
    raise KeyError(f"no agent serves node {sender!r}")


def load_scenario(path: str | Path) -> tuple[dict[str, Any], Path]:
    path = Path(path)
    return json.loads(path.read_text()), path.parent


def run_scenario(doc: Mapping[str, Any], base_dir: str | Path | None = None,
                 audit_path: str | Path | None = None) -> ScenarioReport:
    # agent imports simnet, so import it lazily
    from ..mediator.agent import AgentConfig, MaatAgent
    from ..mediator.engine import result_to_json
    from ..mediator.protocol import InProcessTransport

    base = Path(base_dir) if base_dir is not None else Path.cwd()
    try:
        topo_ref = doc["topology"]
        topology = load_topology(base / topo_ref if isinstance(topo_ref, str) else topo_ref)
        seed = int(doc.get("seed", topology.seed))
        state = NetworkState(topology, pool=doc.get("pool", "239.0.0.0/8"))
        ontology = load_ontology(base / doc["ontology"]) if doc.get("ontology") else None
        clock = LogicalClock()
        transport = InProcessTransport(clock)
        audit = AuditLog(audit_path, truncate=True)
        agents: dict[str, MaatAgent] = {}
        for raw in doc["agents"]:
            cfg = AgentConfig.from_json(raw, base)
            if cfg.seed is None:
                cfg.seed = seed
            if cfg.agent_id in agents:
                raise ValueError(f"duplicate agent {cfg.agent_id!r}")
            agent = MaatAgent(cfg, state, audit=audit, clock=clock, transport=transport,
                              ontology=ontology if ontology is not None else load_ontology(cfg.ontology))
            agents[cfg.agent_id] = agent
            transport.register(cfg.agent_id, agent)
    except ScenarioError:
        raise
    except Exception as exc:
        raise ScenarioError(None, f"{type(exc).__name__}: {exc}") from exc

    steps: list[StepReport] = []
    intents = 0
    for i, step in enumerate(doc.get("script", [])):
        try:
            at = float(step.get("at", clock.now()))
            if at > clock.now():
                clock.advance(at - clock.now())
            sender = step["from"]
            aid = step.get("agent") or route(state.topology, agents, sender)
            if aid not in agents:
                raise KeyError(f"unknown agent {aid!r}")
            agent = agents[aid]
            started = clock.now()
            if "advertize" in step:
                adv = step["advertize"]
                reg = agent.handle_advertize(adv["service"], sender, attrs_from_json(adv.get("attrs", {})))
                steps.append(StepReport(i, at, sender, aid, "advertize", None, started, clock.now(),
                                        {"kind": "registered", "node_id": reg.node_id, "service": reg.service}))
                continue
            text = step["intent"] if "intent" in step else (base / step["intent_file"]).read_text()
            intents += 1
            result = agent.submit_intent(text, sender)
            steps.append(StepReport(i, at, sender, aid, "intent", text.strip(), started, clock.now(),
                                    result_to_json(result)))
        except ScenarioError:
            raise
        except Exception as exc:
            raise ScenarioError(i, f"{type(exc).__name__}: {exc}") from exc

    state_doc = state.to_json()
    scores = {
        a: {"mean": s.mean, "count": s.count, "failure_fraction": s.failure_fraction}
        for a, s in score_agents(audit.records).items()
    } if len(audit) else {}
    closed = sum(1 for a in agents.values() for s in a.sessions.values() if s.closed_at is not None)
    return ScenarioReport(
        name=str(doc.get("name", "")), seed=seed, steps=steps,
        audit_path=str(audit_path) if audit_path else None,
        intents=intents, audit_records=len(audit), closed_sessions=closed,
        scores=scores, groups=state_doc["groups"], announcements=state_doc["announcements"],
    )
