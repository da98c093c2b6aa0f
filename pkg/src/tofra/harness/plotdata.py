"""Per-figure CSV tables derived from an experiment report (data only, no rendering)."""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

from .experiment import SCHEMES, read_report


def _num(s: str):
    return float(s) if s else None


def _write(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else (f"{v:.6f}" if isinstance(v, float) else v) for v in r])


def emit_plotdata(report, out_dir) -> list[Path]:
    """Write three tables per gamma; ``report`` is a CSV path or a list of row dicts.

    * ``numerical_vs_sim_g{γ}.csv``: scenario, numerical, simulated, stderr, deviation_pct (TOFRA, K=N)
    * ``schemes_g{γ}.csv``: scenario, TOFRA, FMP, BP, RR (simulated AAT)
    * ``kdominant_g{γ}.csv``: scenario plus one numerical-AAT column per K
    """
    rows = read_report(report) if isinstance(report, (str, Path)) else list(report)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_gamma = defaultdict(list)
    for r in rows:
        by_gamma[r["gamma"]].append(r)
    written = []
    for g, rs in by_gamma.items():
        scen = list(dict.fromkeys(r["scenario_id"] for r in rs))
        k_labels = list(dict.fromkeys(r["k_dominant"] for r in rs if r["scheme"] == "TOFRA"))
        cell = {(r["scenario_id"], r["scheme"], r["k_dominant"]): r for r in rs}

        def get(sid, scheme, k, col):
            r = cell.get((sid, scheme, k))
            return _num(r[col]) if r else None

        p = out / f"numerical_vs_sim_g{g}.csv"
        _write(p, ["scenario", "numerical", "simulated", "stderr", "deviation_pct"],
               [[s] + [get(s, "TOFRA", "N", c) for c in
                       ("aat_numerical", "aat_sim_mean", "aat_sim_stderr", "deviation_pct")]
                for s in scen])
        written.append(p)

        p = out / f"schemes_g{g}.csv"
        _write(p, ["scenario", *SCHEMES],
               [[s] + [get(s, sch, "N", "aat_sim_mean") for sch in SCHEMES] for s in scen])
        written.append(p)

        p = out / f"kdominant_g{g}.csv"
        _write(p, ["scenario", *[f"K={k}" for k in k_labels]],
               [[s] + [get(s, "TOFRA", k, "aat_numerical") for k in k_labels] for s in scen])
        written.append(p)
    return written
