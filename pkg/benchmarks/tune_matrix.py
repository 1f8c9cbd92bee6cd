"""Acceptance-pattern scoreboard over seeds for parameter tuning.

Runs the Table-style cells in parallel and prints the pass/fail pattern:
(a) level 1: all variants merge; (b) level 3: interactive merges while
decoupled fails; (c) level 3: interactive cost < 0.5x no-safety cost;
(d) interactive collision-free at every level.
"""

import argparse
import json
from concurrent.futures import ProcessPoolExecutor

from interplan.config import default_config, with_overrides
from interplan.simulator import run_benchmark


def run_cell(args):
    level, variant, seed, overrides = args
    cfg = default_config()
    if overrides:
        cfg = with_overrides(cfg, **{k: dict(v) for k, v in overrides.items()})
    cfg = with_overrides(cfg, benchmark={"aggressiveness": level, "variant": variant,
                                         "seed": seed})
    m = run_benchmark(cfg)
    return (level, variant, seed), m.summary_dict()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--jobs", type=int, default=4)
    ap.add_argument("--overrides", type=str, default="{}",
                    help="JSON of config section overrides")
    args = ap.parse_args()
    overrides = json.loads(args.overrides)

    cells = []
    for seed in args.seeds:
        for level in (1, 2, 3):
            for variant in ("interactive", "no_safety", "decoupled"):
                if level == 2 and variant != "interactive":
                    continue
                cells.append((level, variant, seed, overrides))

    results = {}
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        for key, metrics in pool.map(run_cell, cells):
            results[key] = metrics

    n = len(args.seeds)
    for seed in args.seeds:
        print(f"seed {seed}:")
        for level in (1, 2, 3):
            for variant in ("interactive", "no_safety", "decoupled"):
                m = results.get((level, variant, seed))
                if m is None:
                    continue
                print(f"  aggr={level} {variant:12s} merged={str(m['merge_completed']):5s} "
                      f"col={str(m['collision']):5s} cost={m['avg_safety_cost']:7.3f} "
                      f"v={m['avg_speed']:5.2f} pf={m['planning_failures']}")

    a = sum(all(results[(1, v, s)]["merge_completed"]
                for v in ("interactive", "no_safety", "decoupled"))
            for s in args.seeds)
    b1 = sum(results[(3, "interactive", s)]["merge_completed"] for s in args.seeds)
    b2 = sum(not results[(3, "decoupled", s)]["merge_completed"] for s in args.seeds)
    eps = [results[(3, "interactive", s)]["avg_safety_cost"] for s in args.seeds]
    nos = [results[(3, "no_safety", s)]["avg_safety_cost"] for s in args.seeds]
    ratio = (sum(eps) / n) / max(sum(nos) / n, 1e-9)
    d = sum(not results[(lv, "interactive", s)]["collision"]
            for s in args.seeds for lv in (1, 2, 3))
    print(f"\n(a) all-merge@1:      {a}/{n}")
    print(f"(b) interactive@3:    {b1}/{n} merged; decoupled@3 failed: {b2}/{n}")
    print(f"(c) cost ratio @3:    mean {sum(eps)/n:.3f} / {sum(nos)/n:.3f} = {ratio:.3f} (need < 0.5)")
    print(f"(d) no-collision:     {d}/{3*n}")


if __name__ == "__main__":
    main()
