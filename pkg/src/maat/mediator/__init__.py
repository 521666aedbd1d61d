from .agent import AgentConfig, MaatAgent, Session, SessionState, open_state
from .engine import (
    AllocatedResource,
    Failed,
    InstalledRule,
    NonIdnFallback,
    Registration,
    Reified,
    Rejected,
    commit,
    mediate,
    result_from_json,
    result_to_json,
    select,
)
from .policy import PolicyRule, satisfies, utility
from .protocol import Envelope, InProcessTransport, ProtocolError, TransportError

__all__ = [
    "AgentConfig", "AllocatedResource", "Envelope", "Failed", "InProcessTransport",
    "InstalledRule", "MaatAgent", "NonIdnFallback", "PolicyRule", "ProtocolError",
    "Registration", "Reified", "Rejected", "Session", "SessionState", "TransportError",
    "commit", "mediate", "open_state", "result_from_json", "result_to_json", "satisfies",
    "select", "utility",
]
