"""Command line: generate, solve, simulate, experiment, plotdata."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .allocator import (SaParams, baseline_best_path, baseline_fmp, baseline_rr, build_problem,
                        solve_grid, solve_sa)
from .harness.experiment import OUTPUT_ENV, ExperimentConfig, load_config, parse_k, run_experiment
from .harness.generate import GenParams, default_phy, generate_scenario, select_disjoint_paths
from .harness.io import bundled, read_scenario, write_scenario
from .harness.plotdata import emit_plotdata
from .simulator import SimConfig, run


def _out_dir(arg):
    return arg or os.environ.get(OUTPUT_ENV) or "results"


def _load(name: str):
    # "fig3" (or any bundled name) when no such file exists
    if not Path(name).exists() and "/" not in name and not name.endswith(".json"):
        return bundled(name)
    return read_scenario(name)


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.replace(",", " ").split()]


def _area(s: str) -> tuple[float, float]:
    parts = s.lower().replace("x", " ").replace(",", " ").split()
    if len(parts) == 1:
        parts *= 2
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("area must look like 500x500")
    return float(parts[0]), float(parts[1])


def _retx(s: str):
    return None if s.lower() in ("inf", "none", "infinite") else int(s)


def _emit(obj, out):
    text = json.dumps(obj, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_generate(a):
    w, h = a.area
    gen = GenParams(nodes=a.nodes, width=w, height=h, max_flows=a.max_flows,
                    min_flows=a.min_flows, p_min=a.p_min, seed=a.seed)
    sc = generate_scenario(gen, default_phy(a.gamma))
    if not a.unrouted:
        sc = select_disjoint_paths(sc, a.p_min, a.cost)
    if a.out:
        write_scenario(sc, a.out)
    else:
        from .harness.io import scenario_to_dict
        _emit(scenario_to_dict(sc), None)
    print(f"{len(sc.flows)} flows, hops {[f.hops for f in sc.flows]}", file=sys.stderr)


def cmd_solve(a):
    sc = _load(a.scenario)
    if a.gamma is not None:
        sc = sc.with_gamma(a.gamma)
    k = parse_k(a.k)
    prob = build_problem(sc, k, a.delay_margin)
    if a.grid:
        res = solve_grid(prob, a.resolution)
    else:
        res = solve_sa(prob, SaParams(seed=a.sa_seed, restarts=a.restarts))
    _emit({"gamma": sc.phy.gamma, "k_dominant": a.k, "rates": res.rates.tolist(),
           "aux": res.aux.tolist(), "predicted_aat": res.predicted_aat,
           "feasible": res.feasible, "violation": res.violation,
           "stats": {k: v for k, v in res.stats.items() if k != "wall_time"}}, a.out)


def cmd_simulate(a):
    sc = _load(a.scenario)
    if a.gamma is not None:
        sc = sc.with_gamma(a.gamma)
    cfg = SimConfig(total_slots=a.slots, max_retransmits=a.retx, saturated_relays=a.saturated,
                    relay_policy=a.relay_policy, seed=a.seed)
    if a.rates:
        policy = np.array(_floats(a.rates))
    elif a.scheme == "fmp":
        policy = baseline_fmp(sc)
    elif a.scheme == "rr":
        policy = baseline_rr(sc)
    elif a.scheme == "tofra":
        policy = solve_sa(build_problem(sc, None, a.delay_margin), SaParams(seed=a.seed)).rates
    else:
        policy = baseline_best_path(sc, None, SaParams(seed=a.seed), a.delay_margin).rates
    m = run(sc, policy, cfg)
    _emit({"aat": m.aat, "throughput": m.throughput.tolist(),
           "delay_mean": [None if math.isnan(x) else x for x in m.delay_mean],
           "injected": m.injected.tolist(), "delivered": m.delivered_total.tolist(),
           "dropped": m.dropped.tolist(), "in_flight": m.in_flight.tolist(),
           "relays": list(m.relays), "queue_mean": m.queue_mean.tolist(),
           "queue_slope": m.queue_slope.tolist()}, a.out)


def cmd_experiment(a):
    cfg = load_config(a.config) if a.config else ExperimentConfig()
    over = {}
    if a.out_dir or not a.config:
        over["out_dir"] = _out_dir(a.out_dir)
    if a.seed is not None:
        over["seed"] = a.seed
    if a.workers is not None:
        over["workers"] = a.workers
    if a.scenarios is not None:
        over["n_scenarios"] = a.scenarios
    if a.gammas:
        over["gammas"] = tuple(_floats(a.gammas))
    if a.schemes:
        over["schemes"] = tuple(s.strip().upper() for s in a.schemes.split(","))
    if a.k_list:
        over["k_list"] = tuple(parse_k(k) for k in a.k_list.split(","))
    if a.replications is not None:
        over["replications"] = a.replications
    if a.slots is not None:
        over["sim"] = replace(cfg.sim, total_slots=a.slots, warmup_slots=None)
    if a.scenario_file:
        over["scenario_files"] = tuple(a.scenario_file)
    cfg = replace(cfg, **over)
    rows = run_experiment(cfg)
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} rows ({failed} failed) -> {Path(cfg.out_dir) / 'report.csv'}", file=sys.stderr)


def cmd_plotdata(a):
    report = a.report or str(Path(_out_dir(None)) / "report.csv")
    for p in emit_plotdata(report, _out_dir(a.out_dir)):
        print(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tofra", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="random scenario with node-disjoint paths")
    p.add_argument("--nodes", type=int, default=50)
    p.add_argument("--area", type=_area, default=(500.0, 500.0), help="WxH in meters")
    p.add_argument("--max-flows", type=int, default=10)
    p.add_argument("--min-flows", type=int, default=1)
    p.add_argument("--p-min", type=float, default=0.9)
    p.add_argument("--gamma", type=float, default=0.5, help="threshold used to admit links")
    p.add_argument("--cost", choices=("success", "hops"), default="success")
    p.add_argument("--unrouted", action="store_true", help="skip path selection")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="optimal source rates for a scenario")
    p.add_argument("--scenario", default="fig3", help="JSON file or bundled name")
    p.add_argument("--gamma", type=float)
    p.add_argument("--k", default="N", help="dominant interferers per link, N for all")
    p.add_argument("--sa-seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--delay-margin", type=float, default=0.0)
    p.add_argument("--grid", action="store_true", help="exhaustive grid instead of annealing")
    p.add_argument("--resolution", type=float, default=0.01)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="slot-level simulation of a rate vector or scheme")
    p.add_argument("--scenario", default="fig3")
    p.add_argument("--gamma", type=float)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--rates", help="comma separated source rates")
    g.add_argument("--scheme", choices=("tofra", "fmp", "bp", "rr"), default="tofra")
    p.add_argument("--slots", type=int, default=20_000)
    p.add_argument("--retx", type=_retx, default=3, help="retransmit limit or inf")
    p.add_argument("--saturated", action="store_true")
    p.add_argument("--relay-policy", choices=("bernoulli", "backoff"), default="bernoulli")
    p.add_argument("--delay-margin", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="scenario x gamma x scheme grid to report.csv")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--scenarios", type=int, help="number of generated scenarios")
    p.add_argument("--scenario-file", action="append", help="use this scenario file (repeatable)")
    p.add_argument("--gammas")
    p.add_argument("--schemes", help="e.g. TOFRA,FMP,BP,RR")
    p.add_argument("--k-list", help="e.g. N,6,4")
    p.add_argument("--replications", type=int)
    p.add_argument("--slots", type=int)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("plotdata", help="per-figure CSV tables from a report")
    p.add_argument("--report")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_plotdata)
    return ap


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    try:
        a.func(a)
    except (OSError, ValueError) as e:
        print(f"tofra: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
