"""Append-only mediation logs (JSON Lines) and mediation scores."""
from __future__ import annotations

import json
import math
import threading
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Iterable, Iterator

TERMINAL_OUTCOMES = frozenset({"reified", "failed", "fallback", "rejected"})


class AuditError(Exception):
    pass


class NonTerminalRecord(AuditError):
    pass


class EmptyWindow(AuditError):
    pass


@dataclass(frozen=True)
class MediationLogRecord:
    session_id: str
    agent_id: str
    logical_timestamp: int
    intent: str
    plan_digest: str | None
    outcome: str
    bindings: tuple[dict[str, Any], ...] = ()
    hard_total: int = 0
    hard_satisfied: int = 0
    soft_total: int = 0
    soft_satisfied: int = 0
    escalation_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bindings", tuple(self.bindings))
        if self.outcome == "reified" and self.hard_satisfied != self.hard_total:
            raise AuditError("a reified record must satisfy every essential constraint")
        if not 0 <= self.soft_satisfied <= self.soft_total or not 0 <= self.hard_satisfied <= self.hard_total:
            raise AuditError("satisfied counts must lie within their totals")

    def to_json(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["bindings"] = list(self.bindings)
        return doc

    def to_line(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> MediationLogRecord:
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in doc.items() if k in names})


@dataclass(frozen=True)
class MediationScore:
    value: float
    soft_ratio: float
    fallback_penalty_applied: bool = False

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"score {self.value} outside [0, 1]")


def score_session(record: MediationLogRecord) -> MediationScore:
    """Desirable-constraint satisfaction of a reified session; 0 otherwise."""
    if record.outcome not in TERMINAL_OUTCOMES:
        raise NonTerminalRecord(f"session {record.session_id} has outcome {record.outcome!r}")
    ratio = record.soft_satisfied / record.soft_total if record.soft_total else 1.0
    if record.outcome == "reified":
        return MediationScore(ratio, ratio)
    return MediationScore(0.0, ratio, fallback_penalty_applied=True)


@dataclass(frozen=True)
class AgentScore:
    agent_id: str
    mean: float
    count: int
    failure_fraction: float


def score_agent(records: Iterable[MediationLogRecord]) -> AgentScore:
    """Unweighted mean session score over one agent's records."""
    records = list(records)
    if not records:
        raise EmptyWindow("no records to score")
    agents = {r.agent_id for r in records}
    scores = [score_session(r).value for r in records]
    failures = sum(1 for r in records if r.outcome != "reified")
    return AgentScore(
        records[0].agent_id if len(agents) == 1 else ",".join(sorted(agents)),
        math.fsum(scores) / len(scores),
        len(records),
        failures / len(records),
    )


def score_agents(records: Iterable[MediationLogRecord]) -> dict[str, AgentScore]:
    by_agent: dict[str, list[MediationLogRecord]] = {}
    for r in records:
        by_agent.setdefault(r.agent_id, []).append(r)
    return {a: score_agent(rs) for a, rs in sorted(by_agent.items())}


class AuditLog:
    """Single-writer append-only log, mirrored to a JSONL file if given a path."""

    def __init__(self, path: str | Path | None = None, *, truncate: bool = False):
        self.path = Path(path) if path else None
        self.records: list[MediationLogRecord] = []
        self._lock = threading.Lock()
        self._clocks: dict[str, int] = {}
        if self.path is not None:
            if truncate or not self.path.exists():
                self.path.write_text("")
            else:
                self.records = list(read_log(self.path))
                for r in self.records:
                    self._clocks[r.agent_id] = max(self._clocks.get(r.agent_id, 0), r.logical_timestamp)

    def next_timestamp(self, agent_id: str) -> int:
        with self._lock:
            return self._clocks.get(agent_id, 0) + 1

    def append(self, record: MediationLogRecord) -> MediationLogRecord:
        with self._lock:
            last = self._clocks.get(record.agent_id, 0)
            if record.logical_timestamp <= last:
                raise AuditError(
                    f"timestamp {record.logical_timestamp} not after {last} for agent {record.agent_id}"
                )
            self._clocks[record.agent_id] = record.logical_timestamp
            self.records.append(record)
            if self.path is not None:
                with self.path.open("a") as fh:
                    fh.write(record.to_line() + "\n")
        return record

    def __iter__(self) -> Iterator[MediationLogRecord]:
        return iter(list(self.records))

    def __len__(self) -> int:
        return len(self.records)


def read_log(path: str | Path) -> Iterator[MediationLogRecord]:
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield MediationLogRecord.from_json(json.loads(line))
            except (ValueError, TypeError) as exc:
                raise AuditError(f"{path}:{lineno}: {exc}") from None


def replay(path: str | Path) -> dict[str, AgentScore]:
    return score_agents(read_log(path))
