#!/usr/bin/env python3
"""Run the bundled use-case scenarios and print one summary line each.

    python3 scripts/run_use_cases.py [--out DIR]

Audit logs and JSON reports go to DIR (default: ./runs).
"""
import argparse
import json
from pathlib import Path

import maat
from maat.compiler import Constraint
from maat.simnet.scenario import load_scenario, run_scenario

SCENARIOS = Path(maat.__file__).parent / "data" / "scenarios"


def summarize(step) -> str:
    r = step.result
    out = f"{step.sender} -> {step.agent}: {r['kind']}"
    for b in r.get("bindings", []):
        target = b.get("group") or b.get("node_id") or b.get("rule_id")
        out += f" | {b['type']}={target}"
    if r.get("unsatisfied"):
        out += " | unsatisfied " + ", ".join(str(Constraint.from_json(c)) for c in r["unsatisfied"])
    if r.get("reason"):
        out += f" | {r['reason']}"
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs")
    ap.add_argument("names", nargs="*", help="scenario names (default: all)")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = args.names or sorted(p.stem for p in SCENARIOS.glob("*.json"))
    for name in names:
        doc, base = load_scenario(SCENARIOS / f"{name}.json")
        rep = run_scenario(doc, base, out / f"{name}.audit.jsonl")
        (out / f"{name}.report.json").write_text(json.dumps(rep.to_json(), indent=2, sort_keys=True) + "\n")
        print(f"== {name}  (conserved={rep.conserved}, scores={ {a: s['mean'] for a, s in rep.scores.items()} })")
        for s in rep.steps:
            print(f"   t={s.started_at:g}  {summarize(s)}")


if __name__ == "__main__":
    main()
