"""Experiment grid: scenarios x gamma x scheme x K, solved, simulated and written to CSV.

Every random stream is derived from one master seed with
``numpy.random.SeedSequence``, keyed by what the stream is for, so the report
does not depend on worker count or job completion order.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..allocator import (SaParams, baseline_best_path, baseline_fmp, baseline_rr, build_problem,
                         solve_sa)
from ..scenario import Scenario
from ..simulator import SimConfig, queue_stability_report, run
from ..throughput import aggregate_throughput
from .generate import GenParams, GenerationError, default_phy, generate_scenario, select_disjoint_paths
from .io import read_scenario, write_scenario

FORMAT_VERSION = 1
REPORT_COLUMNS = ("scenario_id", "gamma", "scheme", "k_dominant", "aat_numerical", "aat_sim_mean",
                  "aat_sim_stderr", "deviation_pct", "rates", "stable", "status")
SCHEMES = ("TOFRA", "FMP", "BP", "RR")
OUTPUT_ENV = "TOFRA_OUTPUT_DIR"

# stream tags for SeedSequence keys
_GEN, _SA, _SIM = 1, 2, 3


@dataclass(frozen=True)
class ExperimentConfig:
    scenario_files: tuple[str, ...] = ()  # empty: generate `n_scenarios` instead
    n_scenarios: int = 10
    gen: GenParams = GenParams()
    gammas: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0)
    schemes: tuple[str, ...] = SCHEMES
    k_list: tuple[int | None, ...] = (None, 6, 4)  # None: every interferer
    sim: SimConfig = SimConfig()
    replications: int = 1
    sa: SaParams = SaParams()
    delay_margin: float = 0.2
    silent_idle_paths: bool = True  # relays of a flow allocated rate 0 stay silent
    path_cost: str = "hops"
    seed: int = 0
    workers: int = 1
    out_dir: str = field(default_factory=lambda: os.environ.get(OUTPUT_ENV, "results"))

    def __post_init__(self):
        if not self.gammas or any(not g > 0 for g in self.gammas):
            raise ValueError("gamma values must be > 0")
        if self.replications < 1:
            raise ValueError("replication count must be >= 1")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ValueError(f"unknown schemes {bad}; choose from {SCHEMES}")
        if any(k is not None and k < 0 for k in self.k_list):
            raise ValueError("K values must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not 0 <= self.delay_margin < 1:
            raise ValueError("delay_margin must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["k_list"] = [k_label(k) for k in self.k_list]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment config keys: {sorted(unknown)}")
        kw = dict(d)
        nested = {"gen": GenParams, "sim": SimConfig, "sa": SaParams}
        for key, typ in nested.items():
            if key in kw:
                kw[key] = typ(**kw[key])
        for key in ("scenario_files", "gammas", "schemes"):
            if key in kw:
                kw[key] = tuple(kw[key])
        if "k_list" in kw:
            kw["k_list"] = tuple(parse_k(k) for k in kw["k_list"])
        return cls(**kw)


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))


def k_label(k: int | None) -> str:
    return "N" if k is None else str(k)


def parse_k(k) -> int | None:
    if k is None or (isinstance(k, str) and k.upper() in ("N", "ALL")):
        return None
    return int(k)


def derived_seed(master: int, *key: int) -> int:
    return int(np.random.SeedSequence([master, *key]).generate_state(1)[0])


def build_scenarios(cfg: ExperimentConfig) -> list[tuple[str, Scenario | None, str]]:
    """(scenario_id, routed scenario or None, error message) per scenario."""
    out = []
    if cfg.scenario_files:
        for path in cfg.scenario_files:
            sid = Path(path).stem
            try:
                sc = read_scenario(path)
                if not sc.routed:
                    sc = select_disjoint_paths(sc, cfg.gen.p_min, cfg.path_cost)
                out.append((sid, sc, ""))
            except (OSError, ValueError) as e:
                out.append((sid, None, str(e)))
        return out
    # links are admitted at the smallest gamma of the sweep
    phy = default_phy(min(cfg.gammas))
    for idx in range(cfg.n_scenarios):
        sid = f"s{idx:02d}"
        gen = replace(cfg.gen, seed=derived_seed(cfg.seed, _GEN, idx))
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                sc = select_disjoint_paths(generate_scenario(gen, phy), gen.p_min, cfg.path_cost)
            if not sc.flows:
                raise GenerationError("no flow could be routed")
            out.append((sid, sc, ""))
        except GenerationError as e:
            out.append((sid, None, str(e)))
    return out


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.6f}"


def _simulate(sc: Scenario, policy, cfg: ExperimentConfig, key) -> tuple[list[float], bool]:
    aats, stable = [], True
    for rep in range(cfg.replications):
        sim = replace(cfg.sim, seed=derived_seed(cfg.seed, _SIM, *key, rep),
                      silent_idle_paths=cfg.silent_idle_paths)
        m = run(sc, policy, sim)
        aats.append(m.aat)
        stable &= all(v.stable for v in queue_stability_report(m).values())
    return aats, stable


def _row(sid, gamma, scheme, k, numerical, aats, rates, stable, status="ok") -> dict:
    mean = float(np.mean(aats)) if aats else None
    stderr = float(np.std(aats, ddof=1) / math.sqrt(len(aats))) if len(aats) > 1 else None
    dev = None
    if numerical and mean is not None:
        dev = (mean - numerical) / numerical * 100.0
    return {
        "scenario_id": sid, "gamma": f"{gamma:g}", "scheme": scheme, "k_dominant": k_label(k),
        "aat_numerical": _fmt(numerical), "aat_sim_mean": _fmt(mean), "aat_sim_stderr": _fmt(stderr),
        "deviation_pct": _fmt(dev),
        "rates": ";".join(f"{r:.4f}" for r in rates) if rates is not None else "",
        "stable": "" if stable is None else str(bool(stable)).lower(),
        "status": status,
    }


def _error_row(sid, gamma, scheme, k, err) -> dict:
    msg = f"error: {type(err).__name__}: {err}" if isinstance(err, Exception) else f"error: {err}"
    return _row(sid, gamma, scheme, k, None, [], None, None, msg.replace("\n", " "))


def cells(cfg: ExperimentConfig) -> list[tuple[str, int | None]]:
    """(scheme, K) pairs requested per scenario and gamma; only TOFRA sweeps K."""
    out = []
    for s in cfg.schemes:
        ks = cfg.k_list if s == "TOFRA" else (None,)
        out.extend((s, k) for k in ks)
    return out


def run_cell(sid: str, s_idx: int, sc: Scenario, gamma: float, g_idx: int,
             cfg: ExperimentConfig) -> list[dict]:
    """All schemes for one scenario at one gamma."""
    sc = sc.with_gamma(gamma)
    rows = []
    for c_idx, (scheme, k) in enumerate(cells(cfg)):
        key = (s_idx, g_idx, c_idx)
        sa = replace(cfg.sa, seed=derived_seed(cfg.seed, _SA, *key))
        try:
            if scheme == "TOFRA":
                res = solve_sa(build_problem(sc, k, cfg.delay_margin, cfg.silent_idle_paths), sa)
                aats, stable = _simulate(sc, res.rates, cfg, key)
                rows.append(_row(sid, gamma, scheme, k, res.predicted_aat, aats, res.rates, stable))
            elif scheme == "FMP":
                rates = baseline_fmp(sc)
                aats, stable = _simulate(sc, rates, cfg, key)
                num = aggregate_throughput(sc, rates, None, cfg.silent_idle_paths)
                rows.append(_row(sid, gamma, scheme, k, num, aats, rates, stable))
            elif scheme == "BP":
                res = baseline_best_path(sc, None, sa, cfg.delay_margin, cfg.silent_idle_paths)
                aats, stable = _simulate(sc, res.rates, cfg, key)
                rows.append(_row(sid, gamma, scheme, k, res.predicted_aat, aats, res.rates, stable))
            else:
                aats, stable = _simulate(sc, baseline_rr(sc), cfg, key)
                rows.append(_row(sid, gamma, scheme, k, None, aats, None, stable))
        except Exception as e:  # recorded per row, the grid carries on
            rows.append(_error_row(sid, gamma, scheme, k, e))
    return rows


def _job(args):
    return run_cell(*args)


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> list[dict]:
    """Run the whole grid; returns the report rows (and writes them under ``cfg.out_dir``)."""
    scenarios = build_scenarios(cfg)
    rows, jobs = [], []
    for s_idx, (sid, sc, err) in enumerate(scenarios):
        for g_idx, gamma in enumerate(cfg.gammas):
            if sc is None:
                rows.extend(_error_row(sid, gamma, s, k, err) for s, k in cells(cfg))
            else:
                jobs.append((sid, s_idx, sc, gamma, g_idx, cfg))
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            for part in ex.map(_job, jobs):
                rows.extend(part)
    else:
        for job in jobs:
            rows.extend(_job(job))

    s_order = {sid: i for i, (sid, _, _) in enumerate(scenarios)}
    g_order = {f"{g:g}": i for i, g in enumerate(cfg.gammas)}
    c_order = {(s, k_label(k)): i for i, (s, k) in enumerate(cells(cfg))}
    rows.sort(key=lambda r: (s_order[r["scenario_id"]], g_order[r["gamma"]],
                             c_order[(r["scheme"], r["k_dominant"])]))
    if write:
        write_outputs(cfg, scenarios, rows)
    return rows


def report_text(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def write_outputs(cfg: ExperimentConfig, scenarios, rows) -> Path:
    out = Path(cfg.out_dir)
    (out / "scenarios").mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report_text(rows))
    meta = {"format_version": FORMAT_VERSION, "columns": list(REPORT_COLUMNS),
            "config": cfg.to_dict(), "scenarios": {}}
    for sid, sc, err in scenarios:
        if sc is None:
            meta["scenarios"][sid] = {"error": err}
            continue
        write_scenario(sc, out / "scenarios" / f"{sid}.json")
        meta["scenarios"][sid] = {
            "flows": len(sc.flows), "hops": [f.hops for f in sc.flows],
            "dropped_flows": [[f.id, f.src, f.dst] for f in sc.dropped_flows]}
    (out / "report.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out / "report.csv"


def read_report(path) -> list[dict]:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != REPORT_COLUMNS:
            raise ValueError(f"{path}: unexpected report header {r.fieldnames}")
        return list(r)
