#!/usr/bin/env python3
"""Known-distribution MWU against each seller: regret and revenue gap vs 2 sqrt(T ln(K+1))."""
import argparse
import math

from fpa_lab import cli, harness

ap = argparse.ArgumentParser()
ap.add_argument("--dist", default="example1")
ap.add_argument("--K", type=int, default=100)
ap.add_argument("--T", type=int, default=100_000)
ap.add_argument("--bidder", default="known-mwu")
ap.add_argument("--sellers", default="monopoly,example1-schedule,adaptive-greedy")
args = ap.parse_args()

bound = 2 * math.sqrt(args.T * math.log(args.K + 1))
print(f"bound 2 sqrt(T ln(K+1)) = {bound:.1f}")
print(f"{'seller':<20}{'regret':>12}{'lregret':>12}{'rev_gap':>12}{'lregret_q0':>12}")
for seller in args.sellers.split(","):
    cfg = cli.parse_config(None, {"dist": args.dist, "K": args.K, "T": args.T,
                                  "bidder": args.bidder, "seller": seller})
    rep = harness.evaluate(harness.run_episode(cli.build_episode(cfg, 1)))
    print(f"{seller:<20}{rep.regret:>12.2f}{rep.lregret:>12.2f}{rep.rev_gap:>12.2f}{rep.lregret_vs_q0:>12.2f}")
