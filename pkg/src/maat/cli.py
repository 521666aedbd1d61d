"""Command line entry point.

Exit codes: 0 ok, 2 language error, 3 I/O error, 4 network error, 5 scenario error.
"""
from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import threading
from pathlib import Path
from typing import Any, Sequence

from .audit import AuditError, EmptyWindow, read_log, score_agents
from .compiler import ActionRef, action_link, op_name
from .intent_lang import IntentSyntaxError, intent_to_json, parse, render
from .ontology import IntentValidationError, OntologyError, check_intent, load_ontology

EXIT_OK, EXIT_LANG, EXIT_IO, EXIT_NET, EXIT_SCENARIO = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _dump(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True)


def _read(path: str) -> str:
    try:
        if path == "-":
            return sys.stdin.read()
        return Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from None


def _parse(path: str):
    try:
        return parse(_read(path))
    except IntentSyntaxError as exc:
        for d in exc.diagnostics:
            print(f"{path}:{d}", file=sys.stderr)
        raise CliError(EXIT_LANG, "") from None


def _ontology(path: str | None):
    try:
        return load_ontology(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read ontology {path}: {exc}") from None
    except (OntologyError, ValueError, KeyError) as exc:
        raise CliError(EXIT_LANG, f"bad ontology {path}: {exc}") from None


def cmd_parse(args) -> int:
    intent = _parse(args.file)
    print(_dump(intent_to_json(intent)) if args.json else render(intent))
    return EXIT_OK


def cmd_compile(args) -> int:
    from .compiler import compile_intent

    intent = _parse(args.file)
    reg = _ontology(args.ontology)
    try:
        check_intent(intent, reg)
    except IntentValidationError as exc:
        for issue in exc.issues:
            print(f"{args.file}: {issue}", file=sys.stderr)
        raise CliError(EXIT_LANG, "") from None
    plan = compile_intent(intent, reg)
    if args.json:
        print(_dump(plan.to_json()))
        return EXIT_OK
    for i, action in enumerate(plan.actions):
        link = action_link(action)
        link = f"#{link.index}" if isinstance(link, ActionRef) else (link or "-")
        cons = ", ".join(f"{c}{'!' if c.hard else '?'}" for c in action.constraints)
        flags = (" announce" if getattr(action, "announce", False) else "") + (" root" if i == plan.root.index else "")
        print(f"{i}: {op_name(action)} link={link} [{cons}]{flags}")
    return EXIT_OK


def _request(endpoint: str, env, timeout: float):
    from .mediator.protocol import TransportError, tcp_request

    try:
        return tcp_request(endpoint, env, timeout)
    except (TransportError, ValueError) as exc:
        raise CliError(EXIT_NET, f"cannot reach agent {endpoint}: {exc}") from None


def cmd_submit(args) -> int:
    from .mediator.protocol import Envelope

    text = _read(args.file)
    reply = _request(args.agent, Envelope("SUBMIT_INTENT", {"intent_text": text, "requester": args.requester}),
                     args.timeout)
    if reply.type == "ERROR":
        raise CliError(EXIT_NET, f"agent error {reply.body['code']}: {reply.body['message']}")
    outcome = reply.body["outcome"]
    if args.json:
        print(_dump(reply.body))
    else:
        print(f"session {reply.body.get('session_id')}: {outcome['kind']}")
        for b in outcome.get("bindings", []):
            target = b.get("node_id") or b.get("group") or b.get("rule_id") or b.get("resource_id")
            print(f"  action {b['action']}: {b['type']} {target}")
        for key in ("reason", "errors"):
            if outcome.get(key):
                print(f"  {key}: {outcome[key]}")
    return EXIT_LANG if outcome["kind"] == "rejected" else EXIT_OK


def cmd_sessions_list(args) -> int:
    from .mediator.protocol import Envelope

    reply = _request(args.agent, Envelope("LIST_SESSIONS", {}), args.timeout)
    if reply.type != "SESSIONS":
        raise CliError(EXIT_NET, f"unexpected reply {reply.type}")
    sessions = reply.body["sessions"]
    if args.json:
        print(_dump(sessions))
        return EXIT_OK
    print(f"{'session':36}  {'state':9}  {'outcome':9}  esc  requester")
    for s in sessions:
        kind = (s.get("outcome") or {}).get("kind", "-")
        print(f"{s['session_id']:36}  {s['state']:9}  {kind:9}  {s['escalation_count']:3}  {s['requester']}")
    return EXIT_OK


def cmd_agent_run(args) -> int:
    from .mediator.agent import AgentConfig, MaatAgent
    from .mediator.protocol import TcpTransport, serve_tcp
    from .simnet.clock import WallClock
    from .simnet.state import StateUnavailable

    try:
        cfg = AgentConfig.load(args.config)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.config}: {exc}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(EXIT_LANG, f"bad agent config {args.config}: {exc}") from None
    if args.listen:
        cfg.listen = args.listen
    if cfg.ontology is None and os.environ.get("MAAT_ONTOLOGY"):
        cfg.ontology = os.environ["MAAT_ONTOLOGY"]
    try:
        agent = MaatAgent(cfg, clock=WallClock(), transport=TcpTransport())
    except (StateUnavailable, OSError) as exc:
        raise CliError(EXIT_IO, str(exc)) from None
    try:
        server = serve_tcp(agent.handle_line, cfg.listen or "127.0.0.1:7470")
    except OSError as exc:
        raise CliError(EXIT_NET, f"cannot listen on {cfg.listen}: {exc}") from None
    stop = threading.Event()

    def _stop(*_):
        stop.set()

    signal.signal(signal.SIGTERM, _stop)
    signal.signal(signal.SIGINT, _stop)
    server.start_background()
    print(f"agent {cfg.agent_id} listening on {server.endpoint}", flush=True)
    try:
        stop.wait()
    finally:
        server.shutdown()
        server.server_close()
        saved = agent.save_sessions()
        if saved:
            print(f"sessions saved to {saved}", flush=True)
    return EXIT_OK


def cmd_scenario_run(args) -> int:
    from .simnet.scenario import ScenarioError, load_scenario, run_scenario

    try:
        doc, base = load_scenario(args.file)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_IO, f"cannot read scenario {args.file}: {exc}") from None
    audit = args.audit or f"{Path(args.file).stem}.audit.jsonl"
    try:
        report = run_scenario(doc, base, audit)
    except ScenarioError as exc:
        raise CliError(EXIT_SCENARIO, str(exc)) from None
    out = report.to_json()
    if args.report:
        Path(args.report).write_text(_dump(out) + "\n")
    if args.json:
        print(_dump(out))
        return EXIT_OK
    for s in report.steps:
        r = s.result
        line = f"[t={s.started_at:g}] step {s.step} {s.sender} -> {s.agent}: {r['kind']}"
        groups = [b["group"] for b in r.get("bindings", []) if b.get("group")]
        if groups:
            line += " group " + ",".join(groups)
        if r.get("escalation_count"):
            line += f" after {r['escalation_count']} escalation(s)"
        if r.get("reason"):
            line += f" ({r['reason']})"
        print(line)
    print(f"{report.intents} intents, {report.audit_records} audit records, "
          f"{report.closed_sessions} closed sessions; audit log {audit}")
    return EXIT_OK


def cmd_audit_score(args) -> int:
    try:
        records = list(read_log(args.file))
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.file}: {exc}") from None
    except AuditError as exc:
        raise CliError(EXIT_IO, str(exc)) from None
    if not records:
        raise CliError(EXIT_IO, str(EmptyWindow(f"{args.file} holds no records")))
    scores = score_agents(records)
    if args.json:
        print(_dump({a: {"mean": s.mean, "count": s.count, "failure_fraction": s.failure_fraction}
                     for a, s in scores.items()}))
        return EXIT_OK
    for s in scores.values():
        print(f"{s.agent_id}: mean {s.mean:g} over {s.count} sessions, failure fraction {s.failure_fraction:g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maat", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("parse", help="parse an intent and print its canonical form")
    sp.add_argument("file", nargs="?", default="-")
    sp.add_argument("--json", action="store_true", help="print the AST as JSON")
    sp.set_defaults(func=cmd_parse)

    sp = sub.add_parser("compile", help="compile an intent into a reification plan")
    sp.add_argument("file", nargs="?", default="-")
    sp.add_argument("--ontology", default=os.environ.get("MAAT_ONTOLOGY"))
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_compile)

    agent = sub.add_parser("agent", help="run a mediation agent").add_subparsers(dest="action", required=True)
    sp = agent.add_parser("run")
    sp.add_argument("--config", required=True)
    sp.add_argument("--listen", help="host:port, overrides the config")
    sp.set_defaults(func=cmd_agent_run)

    sp = sub.add_parser("submit", help="send an intent to a running agent")
    sp.add_argument("--agent", required=True, help="host:port")
    sp.add_argument("--requester", required=True, help="node id of the submitting node")
    sp.add_argument("--timeout", type=float, default=10.0)
    sp.add_argument("--json", action="store_true")
    sp.add_argument("file", nargs="?", default="-")
    sp.set_defaults(func=cmd_submit)

    scen = sub.add_parser("scenario", help="run a scripted scenario").add_subparsers(dest="action", required=True)
    sp = scen.add_parser("run")
    sp.add_argument("file")
    sp.add_argument("--audit", help="audit log path (default: <scenario>.audit.jsonl)")
    sp.add_argument("--report", help="also write the JSON report here")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_scenario_run)

    aud = sub.add_parser("audit", help="score mediation logs").add_subparsers(dest="action", required=True)
    sp = aud.add_parser("score")
    sp.add_argument("file")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_audit_score)

    ses = sub.add_parser("sessions", help="inspect agent sessions").add_subparsers(dest="action", required=True)
    sp = ses.add_parser("list")
    sp.add_argument("--agent", required=True, help="host:port")
    sp.add_argument("--timeout", type=float, default=10.0)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_sessions_list)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        if str(exc):
            print(f"maat: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
