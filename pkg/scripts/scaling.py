#!/usr/bin/env python3
"""Regret scaling over horizons 2^10..2^16 for MWU and OGA on the simplex; writes scaling.csv."""
import argparse
import sys

from fpa_lab import cli

ap = argparse.ArgumentParser()
ap.add_argument("--dist", default="uniform")
ap.add_argument("--K", type=int, default=256)
ap.add_argument("--seller", default="adaptive-greedy")
ap.add_argument("--seeds", type=int, default=1)
ap.add_argument("--kmax", type=int, default=16)
ap.add_argument("--out", default="runs/scaling")
args = ap.parse_args()

cfg = cli.parse_config(None, {"dist": args.dist, "K": args.K, "seller": args.seller,
                              "seeds": args.seeds, "out": args.out})
Ts = [2**k for k in range(10, args.kmax + 1)]
sys.exit(cli.sweep(cfg, Ts, ["known-mwu", "known-oga-simplex"]))
