"""Command line: ``fpa-lab run | sweep | audit``.

Configuration is a flat ``key = value`` file; every key can also be given as
``--key value`` and flags win.  Exit codes: 0 success, 1 an audited invariant
failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import agents, harness, model, olo

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2

SUMMARY_COLUMNS = ("seed", "T", "K", "regret_ledger", "lregret", "lregret_vs_q0", "rev_gap",
                   "myer", "benchmark", "theorem2_max_violation")
SCALING_COLUMNS = ("bidder", "T", "seeds", "regret", "lregret", "rev_gap",
                   "regret_slope", "lregret_slope")

LEARNER_ALIASES = {"mwu": "mwu", "oga": "oga-simplex", "oga-simplex": "oga-simplex",
                   "oga-polytope": "oga-polytope", "ftrl": "ftrl-entropy",
                   "ftrl-entropy": "ftrl-entropy"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    dist: str = "uniform"
    K: int = 100
    eps: Optional[float] = None         # defaults to 1/K
    bidder: str = "known-mwu"
    seller: str = "adaptive-greedy"
    T: int = 10_000
    seed: int = 1
    delta: Optional[float] = None       # required by unknown-distribution bidders
    seeds: int = 1
    eta_scale: float = 1.0
    out: str = "runs/latest"

    @property
    def grid(self) -> model.BidGrid:
        return model.BidGrid(self.K, 1.0 / self.K if self.eps is None else self.eps)

    @property
    def seed_list(self) -> list[int]:
        return list(range(self.seed, self.seed + self.seeds))

    def dumps(self) -> str:
        return "".join(f"{k} = {'' if v is None else v}\n" for k, v in asdict(self).items())


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    raw = raw.strip()
    if raw == "" and "Optional" in str(kind):
        return None
    try:
        if "int" in str(kind):
            val = float(raw) if re.fullmatch(r"[0-9.eE+-]+", raw) else None
            if val is None or val != int(val):
                raise ValueError
            return int(val)
        if "float" in str(kind):
            if "/" in raw:
                num, den = raw.split("/", 1)
                return float(num) / float(den)
            return float(raw)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{key}: cannot parse {raw!r} as {'integer' if 'int' in str(kind) else 'number'}") from None
    return raw


def read_config_file(path) -> tuple[dict, dict]:
    """(values, line numbers) from a ``key = value`` file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    values, lines = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
        lines[key] = f"{path}:{lineno}"
    return values, lines


def parse_config(path=None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Defaults, then the file, then ``overrides`` (raw strings or typed values)."""
    values, where = ({}, {}) if path is None else read_config_file(path)
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        if key not in _TYPES:
            raise ConfigError(f"unknown option --{key}")
        values[key] = _coerce(key, raw) if isinstance(raw, str) else raw
        where[key] = f"--{key}"
    # the counterexample strategies need 1/8 and 1/4 on the grid
    if values.get("bidder") == "scripted-example1" and "K" not in values and "eps" not in values:
        values.update(K=2, eps=0.125)
    cfg = ExperimentConfig(**values)
    try:
        validate(cfg)
    except ConfigError as exc:
        key = getattr(exc, "key", None)
        prefix = where.get(key)
        raise ConfigError(f"{prefix}: {exc}" if prefix else str(exc)) from None
    return cfg


def _fail(key, msg):
    err = ConfigError(msg)
    err.key = key
    raise err


def validate(cfg: ExperimentConfig) -> None:
    if cfg.K < 1:
        _fail("K", f"K must be >= 1, got {cfg.K}")
    eps = 1.0 / cfg.K if cfg.eps is None else cfg.eps
    if not eps > 0 or cfg.K * eps > 1.0 + 1e-12:
        _fail("eps", f"need 0 < eps and K*eps <= 1, got K={cfg.K}, eps={eps}")
    if cfg.T < 0:
        _fail("T", f"T must be >= 0, got {cfg.T}")
    if cfg.seeds < 1:
        _fail("seeds", "seeds must be >= 1")
    if cfg.seed < 0:
        _fail("seed", "seed must be non-negative")
    if not cfg.eta_scale > 0:
        _fail("eta_scale", "eta_scale must be positive")
    if cfg.delta is not None and not 0.0 < cfg.delta < 1.0:
        _fail("delta", f"delta must lie in (0, 1), got {cfg.delta}")
    family, _ = _split_bidder(cfg.bidder)
    if family == "unknown" and cfg.delta is None:
        _fail("bidder", f"{cfg.bidder} needs delta")
    build_dist(cfg.dist)
    if family == "scripted":
        try:
            agents.example1_strategies(cfg.grid)
        except model.ConstructionError as exc:
            _fail("bidder", f"scripted-example1 needs 1/8 and 1/4 on the grid ({exc})")
    _check_seller(cfg)


def _split_bidder(spec: str):
    if spec == "scripted-example1":
        return "scripted", None
    family, _, learner = spec.partition("-")
    if family not in ("known", "unknown") or learner not in LEARNER_ALIASES:
        _fail("bidder", f"unknown bidder {spec!r}; use known-<learner>, unknown-<learner> "
                        f"or scripted-example1 with learner in {sorted(LEARNER_ALIASES)}")
    return family, LEARNER_ALIASES[learner]


def build_dist(spec: str) -> model.ValueDistribution:
    if spec == "uniform":
        return model.uniform()
    if spec == "example1":
        return model.example1()
    m = re.fullmatch(r"equirevenue\(\s*([0-9.eE+-]+)\s*\)", spec)
    if m:
        try:
            return model.equirevenue(float(m.group(1)))
        except (ValueError, model.ConstructionError) as exc:
            _fail("dist", str(exc))
    path = spec[6:] if spec.startswith("plcdf:") else spec
    if Path(path).is_file():
        try:
            return model.load_plcdf(path)
        except (ValueError, model.ConstructionError) as exc:
            _fail("dist", str(exc))
    _fail("dist", f"unknown distribution {spec!r}; use uniform, example1, equirevenue(a) or a plcdf path")


def _check_seller(cfg: ExperimentConfig):
    s = build_seller(cfg, None)
    if isinstance(s, agents.ScheduleSeller):
        try:
            s.check_covers(cfg.T, cfg.K)
        except model.ConstructionError as exc:
            _fail("seller", str(exc))


def build_seller(cfg: ExperimentConfig, dist) -> agents.Seller:
    spec, grid = cfg.seller, cfg.grid
    if spec.startswith("fixed:"):
        try:
            idx = int(spec[6:])
        except ValueError:
            _fail("seller", f"bad fixed seller {spec!r}")
        if not 0 <= idx <= cfg.K:
            _fail("seller", f"fixed bid index {idx} outside 0..{cfg.K}")
        return agents.FixedSeller(idx)
    if spec == "monopoly":
        return agents.FixedSeller(agents.monopoly_index(dist or build_dist(cfg.dist), grid))
    if spec.startswith("schedule:"):
        try:
            return agents.load_schedule(spec[9:])
        except OSError as exc:
            _fail("seller", f"{spec[9:]}: {exc.strerror}")
        except model.ConstructionError as exc:
            _fail("seller", str(exc))
    if spec == "example1-schedule":
        return agents.example1_schedule(grid, cfg.T)
    if spec == "adaptive-greedy":
        return agents.AdaptiveGreedySeller(grid)
    if spec == "adaptive-greedy-oracle":
        return agents.AdaptiveGreedySeller(grid, oracle=True)
    _fail("seller", f"unknown seller {spec!r}; use fixed:i, monopoly, schedule:path, "
                    "example1-schedule, adaptive-greedy or adaptive-greedy-oracle")


def build_episode(cfg: ExperimentConfig, seed: int) -> harness.EpisodeConfig:
    grid, dist = cfg.grid, build_dist(cfg.dist)
    family, learner = _split_bidder(cfg.bidder)
    if family == "scripted":
        bidder = agents.example1_bidder(grid, dist, cfg.T)
    else:
        alg = olo.make_learner(learner, cfg.K, cfg.eta_scale)
        if family == "known":
            bidder = agents.KnownDistBidder(grid, alg, dist)
        else:
            bidder = agents.UnknownDistBidder(grid, alg, max(cfg.T, 1), cfg.delta)
    return harness.EpisodeConfig(grid, dist, bidder, build_seller(cfg, dist), cfg.T, seed,
                                 cfg.delta)


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def run_seed(cfg: ExperimentConfig, seed: int, out: Optional[Path], myer: float):
    """One episode; returns (summary row, violation messages)."""
    ep = build_episode(cfg, seed)
    trace = harness.run_episode(ep)
    report = harness.evaluate(trace, myer)
    if out is not None:
        harness.write_round_csv(trace, report, out / f"round_seed{seed}.csv")
        if trace.lemma6_gap is not None:
            harness.write_lemma6_csv(trace, out / f"lemma6_seed{seed}.csv")
    row = report.summary_row()
    if trace.T == 0:
        row.update(regret_ledger=0.0, lregret=0.0, lregret_vs_q0=0.0, rev_gap=0.0, benchmark=0.0)
    if not math.isfinite(row["theorem2_max_violation"]):
        row["theorem2_max_violation"] = math.nan
    msgs = [f"seed {seed}: {m}" for m in report.violations(trace.known_distribution)]
    return row, msgs


def _workers(n: int) -> int:
    cap = os.environ.get("FPA_LAB_THREADS")
    limit = int(cap) if cap and cap.isdigit() and int(cap) > 0 else (os.cpu_count() or 1)
    return max(1, min(n, limit))


def run_seeds(cfg: ExperimentConfig, out: Optional[Path]):
    myer = model.myerson_revenue(build_dist(cfg.dist))
    seeds = cfg.seed_list
    workers = _workers(len(seeds))
    if workers == 1:
        results = [run_seed(cfg, s, out, myer) for s in seeds]
    else:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(run_seed, [cfg] * len(seeds), seeds, [out] * len(seeds),
                                    [myer] * len(seeds)))
    return [r for r, _ in results], [m for _, ms in results for m in ms]


def write_summary(rows, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])


def run_experiment(cfg: ExperimentConfig, log=sys.stdout) -> int:
    try:
        validate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.dumps())
    rows, problems = run_seeds(cfg, out)
    write_summary(rows, out / "summary.csv")
    for row in rows:
        T = max(row["T"], 1)
        print(f"seed {row['seed']}: regret/T {row['regret_ledger'] / T:.6g}  "
              f"rev_gap/T {row['rev_gap'] / T:.6g}  lregret {row['lregret']:.6g}", file=log)
    for msg in problems:
        print(f"VIOLATION {msg}", file=sys.stderr)
    return EXIT_VIOLATION if problems else EXIT_OK


def loglog_slope(Ts, ys) -> float:
    """Least-squares slope of ``log max(y, 1)`` on ``log T``; NaN with fewer than two points."""
    if len(Ts) < 2:
        return math.nan
    x = np.log(np.asarray(Ts, dtype=float))
    y = np.log(np.maximum(np.asarray(ys, dtype=float), 1.0))
    return float(np.polyfit(x, y, 1)[0])


def sweep(cfg: ExperimentConfig, T_list, bidders=None, log=sys.stdout) -> int:
    """Scaling table over horizons (and optionally several bidders) in ``scaling.csv``."""
    bidders = list(bidders or [cfg.bidder])
    try:
        for b in bidders:
            validate(replace(cfg, bidder=b, T=max(list(T_list) or [0])))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    table, problems = [], []
    for b in bidders:
        block = []
        for T in T_list:
            rows, msgs = run_seeds(replace(cfg, bidder=b, T=int(T)), None)
            problems += msgs
            block.append({"bidder": b, "T": int(T), "seeds": len(rows),
                          **{k: float(np.mean([r[src] for r in rows])) for k, src in
                             (("regret", "regret_ledger"), ("lregret", "lregret"), ("rev_gap", "rev_gap"))}})
            print(f"{b} T={T}: regret {block[-1]['regret']:.6g}  rev_gap {block[-1]['rev_gap']:.6g}",
                  file=log)
        Ts = [r["T"] for r in block]
        rs, ls = loglog_slope(Ts, [r["regret"] for r in block]), loglog_slope(Ts, [r["lregret"] for r in block])
        for r in block:
            r.update(regret_slope=rs, lregret_slope=ls)
        table += block
    with open(out / "scaling.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCALING_COLUMNS)
        for r in table:
            w.writerow([_fmt(r[c]) for c in SCALING_COLUMNS])
    for msg in problems:
        print(f"VIOLATION {msg}", file=sys.stderr)
    return EXIT_VIOLATION if problems else EXIT_OK


def _read_csv(path: Path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def audit(directory, log=sys.stdout) -> int:
    """Re-check the Theorem 2 audit, regret vs linearized regret and the Lemma 6 bound from CSVs."""
    d = Path(directory)
    try:
        values, _ = read_config_file(d / "config.txt")
        summary = {int(r["seed"]): r for r in _read_csv(d / "summary.csv")}
    except (ConfigError, OSError) as exc:
        print(f"audit: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    known = str(values.get("bidder", "")).startswith("known-")
    problems = []
    for seed, row in sorted(summary.items()):
        rounds = d / f"round_seed{seed}.csv"
        if not rounds.is_file():
            problems.append(f"seed {seed}: missing {rounds.name}")
            continue
        recs = _read_csv(rounds)
        if known and recs:
            myer = float(row["myer"])
            worst = max(float(r["exp_revenue"]) + float(r["lgrad_dot_q"]) for r in recs) - myer
            print(f"seed {seed}: theorem2 max violation {worst:.3g}", file=log)
            if worst > harness.AUDIT_TOL:
                problems.append(f"seed {seed}: theorem2 audit violated by {worst:.3g}")
            if float(row["regret_ledger"]) > float(row["lregret"]) + harness.LEDGER_TOL:
                problems.append(f"seed {seed}: regret exceeds linearized regret")
        l6 = d / f"lemma6_seed{seed}.csv"
        if l6.is_file():
            worst = max((float(r["l1_gap"]) - float(r["bound"]) for r in _read_csv(l6)), default=-math.inf)
            print(f"seed {seed}: lemma 6 max slack use {worst:.3g}", file=log)
            if worst > 1e-12:
                problems.append(f"seed {seed}: lemma 6 bound violated by {worst:.3g}")
    for msg in problems:
        print(f"VIOLATION {msg}", file=sys.stderr)
    return EXIT_VIOLATION if problems else EXIT_OK


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value file; flags override it")
    for name in _TYPES:
        p.add_argument(f"--{name}", dest=name, default=None, metavar=name.upper())


def _overrides(ns) -> dict:
    return {k: getattr(ns, k) for k in _TYPES if getattr(ns, k, None) is not None}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fpa-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="cmd", required=True)
    _add_config_flags(sub.add_parser("run", help="run one experiment (all seeds)"))
    sw = sub.add_parser("sweep", help="scaling table over horizons")
    _add_config_flags(sw)
    sw.add_argument("--T-list", dest="T_list", default="", help="comma-separated horizons")
    sw.add_argument("--bidders", default=None, help="comma-separated bidder specs to compare")
    au = sub.add_parser("audit", help="re-check invariants on a run directory")
    au.add_argument("directory")
    ns = parser.parse_args(argv)

    if ns.cmd == "audit":
        return audit(ns.directory)
    try:
        cfg = parse_config(ns.config, _overrides(ns))
        if ns.cmd == "run":
            return run_experiment(cfg)
        T_list = [int(float(x)) for x in ns.T_list.split(",") if x.strip()]
        if any(T < 0 for T in T_list):
            raise ConfigError("--T-list entries must be non-negative")
        bidders = [b.strip() for b in ns.bidders.split(",")] if ns.bidders else None
        return sweep(cfg, T_list, bidders)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
