#!/usr/bin/env python3
"""Negative-regret counterexample: scripted bidder vs the two-phase seller.

Prints the per-round ledger next to its closed forms and writes the run
directory (config, per-round CSV, summary) under --out.
"""
import argparse
import math
import sys

from fpa_lab import cli, harness

ap = argparse.ArgumentParser()
ap.add_argument("--T", type=int, default=10_000)
ap.add_argument("--out", default="runs/example1")
args = ap.parse_args()

cfg = cli.parse_config(None, {"dist": "example1", "bidder": "scripted-example1",
                              "seller": "example1-schedule", "T": args.T, "out": args.out})
rc = cli.run_experiment(cfg)
rep = harness.evaluate(harness.run_episode(cli.build_episode(cfg, cfg.seed)))
T = cfg.T
rows = [
    ("benchmark / T", rep.benchmark / T, math.log(12) / 16 + 1 / 48),
    ("utility / T", rep.total_utility / T, math.log(18) / 16 + 1 / 192),
    ("revenue / T", rep.rev_gap / T + rep.myer, 9 / 64),
    ("rev_gap / T", rep.rev_gap / T, 1 / 64),
    ("regret / T", rep.regret / T, math.log(12) / 16 + 1 / 48 - math.log(18) / 16 - 1 / 192),
]
print(f"{'quantity':<16}{'measured':>16}{'closed form':>16}")
for name, got, want in rows:
    print(f"{name:<16}{got:>16.10f}{want:>16.10f}")
print("hindsight thresholds:", rep.benchmark_strategy.inner)
sys.exit(rc)
