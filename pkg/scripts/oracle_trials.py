#!/usr/bin/env python3
"""Compare the mediation engine against the brute-force oracle on random trials.

    python3 scripts/oracle_trials.py --trials 1000 --nodes 32

Also checks that scaling every utility and the soft weight by each --scale
factor leaves the selection unchanged.
"""
import argparse
import sys
import time
from collections import Counter
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from generators import random_trial  # noqa: E402
from oracle import mediate as oracle_mediate  # noqa: E402
from trials import agree, run_engine  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--nodes", type=int, default=32, help="max nodes per topology")
    ap.add_argument("--seed", type=int, default=0, help="first trial seed")
    ap.add_argument("--scale", type=float, nargs="*", default=[0.5, 10.0])
    args = ap.parse_args()

    kinds, mismatches, unstable = Counter(), [], []
    t0 = time.perf_counter()
    for seed in range(args.seed, args.seed + args.trials):
        t = random_trial(seed, args.nodes)
        exp, got = oracle_mediate(t), run_engine(t)
        kinds[exp["kind"]] += 1
        if not agree(got, exp):
            mismatches.append(seed)
        for k in args.scale:
            if run_engine(t, k)["chosen"] != got["chosen"]:
                unstable.append((seed, k))
    dt = time.perf_counter() - t0
    print(f"{args.trials} trials in {dt:.1f}s: {dict(kinds)}")
    print(f"oracle mismatches: {len(mismatches)} {mismatches[:10]}")
    print(f"scale-dependent selections: {len(unstable)} {unstable[:10]}")
    sys.exit(1 if mismatches or unstable else 0)


if __name__ == "__main__":
    main()
