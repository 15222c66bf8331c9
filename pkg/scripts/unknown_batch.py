#!/usr/bin/env python3
"""Unknown-distribution MWU over many seeds.

Reports the q vs q' band check per seed, how many seeds exceed
2 sqrt(T ln(K+1)) + C sqrt(T ln(T/delta)) for the given C, and the
smallest C that would cover every seed.
"""
import argparse
import math
import time

from fpa_lab import cli, harness, model

ap = argparse.ArgumentParser()
ap.add_argument("--dist", default="example1")
ap.add_argument("--seller", default="adaptive-greedy")
ap.add_argument("--K", type=int, default=100)
ap.add_argument("--T", type=int, default=100_000)
ap.add_argument("--delta", type=float, default=0.1)
ap.add_argument("--seeds", type=int, default=50)
ap.add_argument("--C", type=float, default=10.0)
args = ap.parse_args()

cfg = cli.parse_config(None, {"dist": args.dist, "K": args.K, "T": args.T, "delta": args.delta,
                              "bidder": "unknown-mwu", "seller": args.seller})
myer = model.myerson_revenue(cli.build_dist(cfg.dist))
base = 2 * math.sqrt(args.T * math.log(args.K + 1))
scale = math.sqrt(args.T * math.log(args.T / args.delta))
worst_c, exceed = -math.inf, 0
t0 = time.time()
for seed in range(1, args.seeds + 1):
    rep = harness.evaluate(harness.run_episode(cli.build_episode(cfg, seed)), myer)
    top = max(rep.regret, rep.rev_gap)
    worst_c = max(worst_c, (top - base) / scale)
    exceed += top > base + args.C * scale
    print(f"seed {seed:3d}  regret {rep.regret:10.1f}  rev_gap {rep.rev_gap:10.1f}  "
          f"band check {rep.lemma6_max_violation:.3g}  ({time.time() - t0:.0f}s)", flush=True)
print(f"seeds above the C={args.C:g} envelope: {exceed}/{args.seeds}")
print(f"smallest C covering all seeds: {worst_c:.3f}")
