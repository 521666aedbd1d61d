#!/usr/bin/env python3
"""Escalation chains on a logical clock.

Builds a chain of N agents where every agent below the top is too slow to
mediate, submits one intent at the bottom and reports how far it travelled
and how much logical time it cost, for each escalation limit.
"""
import argparse

import maat
from maat.audit import AuditLog
from maat.mediator.agent import AgentConfig, MaatAgent
from maat.mediator.protocol import InProcessTransport
from maat.simnet.clock import LogicalClock
from maat.simnet.state import NetworkState
from maat.simnet.topology import load_topology

TOPOLOGY = maat.__file__.rsplit("/", 1)[0] + "/data/topologies/hierarchy.json"
INTENT = "<discover, hadoop, (rtt<80ms,essential), NULL>"


def chain(depth: int, max_esc: int, timeout: float, top_online: bool):
    clock = LogicalClock()
    net = InProcessTransport(clock)
    state = NetworkState(load_topology(TOPOLOGY))
    agents = []
    for i in range(depth):
        top = i == depth - 1
        cfg = AgentConfig(f"level{i}", scope_level=i, parent_endpoint=None if top else f"level{i + 1}",
                          max_escalations=max_esc, mediation_timeout=timeout,
                          mediation_delay=0.0 if top else timeout * 2, online=top_online or not top)
        agents.append(MaatAgent(cfg, state, audit=AuditLog(), clock=clock, transport=net))
        net.register(cfg.agent_id, agents[-1])
    return agents[0], clock


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--depth", type=int, default=4, help="agents in the chain")
    ap.add_argument("--timeout", type=float, default=2.0)
    args = ap.parse_args()
    print(f"{'max_esc':>7} {'top':>7} {'outcome':>9} {'hops':>4} {'time':>6} {'bound':>6}  chain / reason")
    for top_online in (True, False):
        for max_esc in range(0, args.depth + 1):
            leaf, clock = chain(args.depth, max_esc, args.timeout, top_online)
            r = leaf.submit_intent(INTENT, "client")
            s = leaf.sessions[r.session_id]
            bound = (max_esc + 1) * args.timeout
            note = "->".join(s.agent_chain) if r.kind == "reified" else getattr(r, "reason", "")
            print(f"{max_esc:>7} {'up' if top_online else 'down':>7} {r.kind:>9} {r.escalation_count:>4} "
                  f"{clock.now():>6g} {bound:>6g}  {note}")


if __name__ == "__main__":
    main()
